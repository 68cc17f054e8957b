#include "graphids/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "graphids/error.hpp"

namespace graphids {

BatchOutput run_edge_batch(Model& model, const FlowGraph& graph, const EdgeBatch& batch, Mode mode,
                           bool backward, Rng& dropout_rng, Rng& mask_rng, PipelineProbe* probe) {
  if (backward && mode != Mode::Train) throw Error("run_edge_batch: backward requires train mode");
  const TrainConfig& cfg = model.config();
  Tape tape(backward);

  notify(probe, "embed");
  const Var h = model.embed(tape, graph, batch, mode, dropout_rng);

  const auto plans = plan_windows(batch.size(), cfg.window_size, cfg.ae_batch_size);
  BatchOutput out;
  out.scores.assign(batch.size(), 0.0);
  out.n_valid = batch.size();
  std::vector<Var> parts;
  for (const auto& slots : plans) {
    notify(probe, "assemble");
    WindowContext ctx;
    ctx.windows = cfg.ae_batch_size;
    ctx.window_size = cfg.window_size;
    auto valid = std::make_shared<std::vector<std::uint8_t>>(slots.size(), 0);
    for (std::size_t i = 0; i < slots.size(); ++i) (*valid)[i] = slots[i] >= 0 ? 1 : 0;
    ctx.n_valid = static_cast<std::size_t>(std::count(valid->begin(), valid->end(), 1));
    if (mode == Mode::Train) {
      notify(probe, "mask");
      auto masked = std::make_shared<std::vector<std::uint8_t>>(slots.size(), 0);
      // Valid slots form a prefix of the window batch.
      for (const std::size_t k : sample_attention_mask(ctx.n_valid, cfg.mask_ratio, mask_rng))
        (*masked)[k] = 1;
      ctx.masked = masked;
    }
    ctx.valid = valid;

    const Var input = ag::gather_rows(h, slots);
    notify(probe, "reconstruct");
    const Var recon = model.reconstructor().forward(tape, input, ctx, mode, dropout_rng);
    const Var sq = ag::row_sq_norm(ag::sub(input, recon));

    notify(probe, "score");
    const Mat& s = sq.value();
    std::vector<double> weights(slots.size(), 0.0);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i] < 0) continue;
      out.scores[static_cast<std::size_t>(slots[i])] = s(static_cast<Eigen::Index>(i), 0);
      weights[i] = 1.0 / static_cast<double>(out.n_valid);
    }
    if (backward) parts.push_back(ag::weighted_sum(sq, weights));
  }
  out.loss = out.n_valid == 0 ? 0.0
                              : std::accumulate(out.scores.begin(), out.scores.end(), 0.0) /
                                    static_cast<double>(out.n_valid);
  if (backward && !parts.empty()) {
    notify(probe, "backward");
    tape.backward(ag::scalar_sum(parts));
  }
  return out;
}

std::vector<double> score_graph(Model& model, const FlowGraph& graph, std::uint64_t seed,
                                PipelineProbe* probe) {
  const TrainConfig& cfg = model.config();
  Rng order_rng = make_rng(seed, 0xe7a1);
  Rng sample_rng = make_rng(seed, 0x5a3b1e);
  Rng unused_dropout(0);
  Rng unused_mask(0);
  const SamplerOptions sampler = sampler_options(cfg);
  std::vector<double> scores(graph.num_edges(), 0.0);
  for (const auto& ids : partition_edges(graph.num_edges(), cfg.gnn_batch_size, true, order_rng)) {
    notify(probe, "sample");
    const EdgeBatch batch = model.uses_graph() ? sample_edge_batch(graph, ids, sampler, sample_rng)
                                               : target_only_batch(graph, ids);
    const BatchOutput r =
        run_edge_batch(model, graph, batch, Mode::Eval, false, unused_dropout, unused_mask, probe);
    for (std::size_t i = 0; i < ids.size(); ++i) scores[static_cast<std::size_t>(ids[i])] = r.scores[i];
  }
  return scores;
}

BatchIterator make_batch_iterator(const Model& model, const FlowGraph& graph, std::uint64_t seed) {
  return BatchIterator(graph, model.config().gnn_batch_size, true, seed, sampler_options(model.config()),
                       model.uses_graph());
}

}  // namespace graphids
