#pragma once

// Edge-feature GraphSAGE encoder producing one embedding per target flow.
//
// Layer k updates every local node v:
//   msg_v = mean over sampled incident edges e=(v,u) of [h_u ; x_e]
//   h_v   = act([h_v ; msg_v] W_k + b_k)      (dropout in train mode)
// A node without sampled edges receives a zero message. The embedding of
// a target edge (u, v) is [h_u ; h_v] P + c.

#include <memory>
#include <string>
#include <vector>

#include "graphids/autograd.hpp"
#include "graphids/flow_graph.hpp"

namespace graphids {

enum class Activation { Relu, Identity };

Activation parse_activation(std::string_view s);

struct GnnConfig {
  int feature_dim = 0;
  int node_dim = 0;  // 0: same as feature_dim
  int hidden_dim = 64;
  int out_dim = 64;
  int layers = 1;  // equals the sampling hop count
  double dropout = 0.0;
  Activation activation = Activation::Relu;
};

// Constant all-ones node states.
Mat init_node_states(std::size_t num_nodes, int dim);

struct GnnTrace {
  std::unique_ptr<Tape> tape;
  Var output;
};

class GnnEncoder {
 public:
  GnnEncoder(const GnnConfig& config, ParameterStore& store, Rng& init_rng);

  const GnnConfig& config() const { return config_; }
  int node_dim() const { return config_.node_dim > 0 ? config_.node_dim : config_.feature_dim; }

  // Rows follow batch.target_edges.
  Var forward(Tape& tape, const FlowGraph& graph, const EdgeBatch& batch, Mode mode,
              Rng& dropout_rng) const;
  Mat embed(const FlowGraph& graph, const EdgeBatch& batch) const;  // eval mode

  GnnTrace forward_trace(const FlowGraph& graph, const EdgeBatch& batch, Mode mode,
                         Rng& dropout_rng) const;
  // Gradients of <upstream, output> for every encoder parameter, in
  // parameters() order.
  std::vector<Mat> backward(GnnTrace& trace, const Mat& upstream) const;

  std::vector<Parameter*> parameters() const;

 private:
  GnnConfig config_;
  std::vector<Parameter*> weights_;
  std::vector<Parameter*> biases_;
  Parameter* proj_w_ = nullptr;
  Parameter* proj_b_ = nullptr;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Mat init_uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

}  // namespace graphids
