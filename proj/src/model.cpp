#include "graphids/model.hpp"

#include "graphids/error.hpp"

namespace graphids {

Model::Model(const TrainConfig& config, int feature_dim) : config_(config), feature_dim_(feature_dim) {
  config_.validate();
  if (feature_dim_ < 1) throw Error("model: feature dimension must be >= 1");
  Rng init = make_rng(config_.seed, 0x1417);
  if (config_.variant != Variant::TMae)
    gnn_ = std::make_unique<GnnEncoder>(gnn_config(config_, feature_dim_), store_, init);
  const int in_dim = graphids::reconstruction_dim(config_, feature_dim_);
  if (config_.variant == Variant::SimpleAe)
    reconstructor_ = std::make_unique<SimpleAe>(simple_ae_config(config_, in_dim), store_, init);
  else
    reconstructor_ = std::make_unique<TransformerMae>(mae_config(config_, in_dim), store_, init);
}

Var Model::embed(Tape& tape, const FlowGraph& graph, const EdgeBatch& batch, Mode mode,
                 Rng& dropout_rng) const {
  if (static_cast<int>(graph.feature_dim()) != feature_dim_)
    throw ShapeError("model expects " + std::to_string(feature_dim_) + " features, got " +
                     std::to_string(graph.feature_dim()));
  if (gnn_) return gnn_->forward(tape, graph, batch, mode, dropout_rng);
  Mat x(static_cast<Eigen::Index>(batch.size()), feature_dim_);
  for (std::size_t i = 0; i < batch.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = graph.features().row(batch.target_edges[i]);
  if (!x.allFinite()) throw Error("model: non-finite input features");
  return tape.constant(std::move(x));
}

}  // namespace graphids
