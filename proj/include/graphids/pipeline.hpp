#pragma once

// The forward path shared by training, scoring, and every ablation variant:
// edge batch -> embeddings -> window batches -> reconstruction -> scores.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "graphids/model.hpp"

namespace graphids {

// Observes the stages the pipeline runs through, in order.
class PipelineProbe {
 public:
  virtual ~PipelineProbe() = default;
  virtual void on_stage(std::string_view stage) = 0;
};

class RecordingProbe : public PipelineProbe {
 public:
  void on_stage(std::string_view stage) override { stages.emplace_back(stage); }
  std::vector<std::string> stages;
};

inline void notify(PipelineProbe* probe, std::string_view stage) {
  if (probe != nullptr) probe->on_stage(stage);
}

struct BatchOutput {
  std::vector<double> scores;  // aligned with batch.target_edges
  double loss = 0.0;           // mean score over the batch
  std::size_t n_valid = 0;
};

// Train mode samples an attention mask per window batch (mask_ratio from the
// model config) and, when `backward` is set, accumulates d(loss)/d(param)
// into the parameter store. Eval mode never masks.
BatchOutput run_edge_batch(Model& model, const FlowGraph& graph, const EdgeBatch& batch, Mode mode,
                           bool backward, Rng& dropout_rng, Rng& mask_rng,
                           PipelineProbe* probe = nullptr);

// Eval-mode score of every edge of `graph`, in edge order. Flows are
// visited in a fixed order derived from `seed`, so repeated calls agree.
std::vector<double> score_graph(Model& model, const FlowGraph& graph, std::uint64_t seed,
                                PipelineProbe* probe = nullptr);

// Batching used for training: shuffled edges, neighbourhood sampling only
// for models with a graph encoder.
BatchIterator make_batch_iterator(const Model& model, const FlowGraph& graph, std::uint64_t seed);

}  // namespace graphids
