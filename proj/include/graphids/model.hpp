#pragma once

// The trainable model: an optional graph encoder feeding a reconstructor.

#include <memory>

#include "graphids/config.hpp"

namespace graphids {

class Model {
 public:
  Model(const TrainConfig& config, int feature_dim);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const TrainConfig& config() const { return config_; }
  int feature_dim() const { return feature_dim_; }
  int reconstruction_dim() const { return reconstructor_->input_dim(); }
  bool uses_graph() const { return gnn_ != nullptr; }

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const GnnEncoder* gnn() const { return gnn_.get(); }
  const Reconstructor& reconstructor() const { return *reconstructor_; }

  // One row per target edge of the batch: GNN embeddings, or the scaled
  // flow features when the model has no graph encoder.
  Var embed(Tape& tape, const FlowGraph& graph, const EdgeBatch& batch, Mode mode,
            Rng& dropout_rng) const;

 private:
  TrainConfig config_;
  int feature_dim_;
  ParameterStore store_;
  std::unique_ptr<GnnEncoder> gnn_;
  std::unique_ptr<Reconstructor> reconstructor_;
};

}  // namespace graphids
