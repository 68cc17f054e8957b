#include "graphids/gnn_encoder.hpp"

#include <cmath>

#include "graphids/error.hpp"

namespace graphids {

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "identity" || s == "linear") return Activation::Identity;
  throw Error("unknown activation '" + std::string(s) + "'");
}

Mat init_node_states(std::size_t num_nodes, int dim) {
  return Mat::Ones(static_cast<Eigen::Index>(num_nodes), dim);
}

Mat init_uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

GnnEncoder::GnnEncoder(const GnnConfig& config, ParameterStore& store, Rng& init_rng)
    : config_(config) {
  if (config_.feature_dim <= 0) throw Error("gnn: feature_dim must be positive");
  if (config_.hidden_dim <= 0 || config_.out_dim <= 0) throw Error("gnn: dimensions must be positive");
  if (config_.layers < 1) throw Error("gnn: at least one layer (hop) is required");
  if (config_.dropout < 0.0 || config_.dropout >= 1.0) throw Error("gnn: dropout must lie in [0, 1)");

  int state_dim = node_dim();
  for (int k = 0; k < config_.layers; ++k) {
    const int in = 2 * state_dim + config_.feature_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weights_.push_back(&store.add("gnn.layer" + std::to_string(k) + ".weight", ParamGroup::Gnn,
                                  init_uniform(in, config_.hidden_dim, bound, init_rng)));
    biases_.push_back(&store.add("gnn.layer" + std::to_string(k) + ".bias", ParamGroup::Gnn,
                                 init_uniform(1, config_.hidden_dim, bound, init_rng)));
    state_dim = config_.hidden_dim;
  }
  const double bound = 1.0 / std::sqrt(2.0 * state_dim);
  proj_w_ = &store.add("gnn.edge_proj.weight", ParamGroup::Gnn,
                       init_uniform(2 * state_dim, config_.out_dim, bound, init_rng));
  proj_b_ = &store.add("gnn.edge_proj.bias", ParamGroup::Gnn,
                       init_uniform(1, config_.out_dim, bound, init_rng));
}

std::vector<Parameter*> GnnEncoder::parameters() const {
  std::vector<Parameter*> out;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back(weights_[k]);
    out.push_back(biases_[k]);
  }
  out.push_back(proj_w_);
  out.push_back(proj_b_);
  return out;
}

Var GnnEncoder::forward(Tape& tape, const FlowGraph& graph, const EdgeBatch& batch, Mode mode,
                        Rng& dropout_rng) const {
  if (static_cast<int>(graph.feature_dim()) != config_.feature_dim)
    throw ShapeError("gnn: graph feature dimension " + std::to_string(graph.feature_dim()) +
                     " does not match encoder input " + std::to_string(config_.feature_dim));
  if (batch.hops != config_.layers)
    throw Error("gnn: batch was sampled for " + std::to_string(batch.hops) +
                " hops but the encoder has " + std::to_string(config_.layers) + " layers");
  if (batch.adj_offsets.size() != batch.nodes.size() + 1)
    throw Error("gnn: batch carries no sampled adjacency");

  const std::size_t m = batch.num_local_nodes();
  const Eigen::Index dx = config_.feature_dim;
  Mat x_adj(static_cast<Eigen::Index>(batch.adj_edges.size()), dx);
  for (std::size_t i = 0; i < batch.adj_edges.size(); ++i)
    x_adj.row(static_cast<Eigen::Index>(i)) = graph.features().row(batch.adj_edges[i]);
  if (!x_adj.allFinite()) throw Error("gnn: non-finite edge features");
  const Var xe = tape.constant(std::move(x_adj));

  Var h = tape.constant(init_node_states(m, node_dim()));
  const bool train = mode == Mode::Train;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    Var msg;
    if (!batch.adj_edges.empty()) {
      const Var nb = ag::gather_rows(h, batch.adj_neighbors);
      const Var parts[] = {nb, xe};
      msg = ag::segment_mean(ag::concat_cols(parts), batch.adj_offsets);
    } else {
      msg = tape.constant(Mat::Zero(static_cast<Eigen::Index>(m), h.cols() + dx));
    }
    const Var in[] = {h, msg};
    Var z = ag::linear(ag::concat_cols(in), tape.parameter(*weights_[k]), tape.parameter(*biases_[k]));
    h = config_.activation == Activation::Relu ? ag::relu(z) : z;
    if (train && config_.dropout > 0.0)
      h = ag::mul_const(h, ag::dropout_mask(h.rows(), h.cols(), config_.dropout, dropout_rng));
  }
  const Var ends[] = {ag::gather_rows(h, batch.target_src), ag::gather_rows(h, batch.target_dst)};
  return ag::linear(ag::concat_cols(ends), tape.parameter(*proj_w_), tape.parameter(*proj_b_));
}

Mat GnnEncoder::embed(const FlowGraph& graph, const EdgeBatch& batch) const {
  Tape tape(false);
  Rng unused(0);
  return forward(tape, graph, batch, Mode::Eval, unused).value();
}

GnnTrace GnnEncoder::forward_trace(const FlowGraph& graph, const EdgeBatch& batch, Mode mode,
                                   Rng& dropout_rng) const {
  GnnTrace trace;
  trace.tape = std::make_unique<Tape>(mode == Mode::Train);
  trace.output = forward(*trace.tape, graph, batch, mode, dropout_rng);
  return trace;
}

std::vector<Mat> GnnEncoder::backward(GnnTrace& trace, const Mat& upstream) const {
  if (!trace.tape || !trace.output.valid()) throw Error("gnn backward: no forward pass recorded");
  if (!trace.tape->grad_enabled())
    throw Error("gnn backward: forward pass must run in train mode");
  const auto params = parameters();
  for (Parameter* p : params) p->grad.setZero(p->value.rows(), p->value.cols());
  trace.tape->backward(trace.output, upstream);
  std::vector<Mat> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) grads.push_back(p->grad);
  return grads;
}

}  // namespace graphids
