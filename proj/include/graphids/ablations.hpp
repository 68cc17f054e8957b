#pragma once

// Baselines and ablation sweeps that reuse the training and scoring
// pipeline: T-MAE (no graph encoder), SimpleAE (MLP instead of the
// Transformer), and config-override grids.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "graphids/detection.hpp"
#include "graphids/training.hpp"

namespace graphids {

// Trains `config` on the split and evaluates the best checkpoint.
EvalReport run_variant(const TrainConfig& config, const DatasetSplit& split, const TrainOptions& options = {});
EvalReport run_t_mae(TrainConfig config, const DatasetSplit& split, const TrainOptions& options = {});
EvalReport run_simple_ae(TrainConfig config, const DatasetSplit& split, const TrainOptions& options = {});

// T-MAE with a tenfold learning rate.
TrainConfig t_mae_high_lr(TrainConfig config);

struct AblationSpec {
  std::string name;
  Variant variant = Variant::GraphIds;
  std::vector<std::pair<std::string, std::string>> overrides;  // config key -> value
  std::optional<bool> timestamps;                              // re-ingest with timestamps on/off

  TrainConfig apply(TrainConfig base) const;
  std::string overrides_text() const;  // "key=value;key=value"
};

std::vector<AblationSpec> mask_ratio_grid();  // 0, 0.15, 0.3, 0.5, 0.7
std::vector<AblationSpec> hop_grid();         // 1, 2, 3

struct AblationOutcome {
  AblationSpec spec;
  std::string fingerprint;
  std::string status;  // ok | diverged | error
  std::string diagnostic;
  double pr_auc = 0.0;
  double macro_f1 = 0.0;
  double runtime_s = 0.0;
  std::optional<EvalReport> report;
};

// Supplies the dataset split for a timestamps setting (nullopt: default).
using SplitProvider = std::function<const DatasetSplit&(std::optional<bool> timestamps)>;

// One outcome per spec, in spec order. Failures are recorded, never thrown.
// Up to `workers` entries run concurrently.
std::vector<AblationOutcome> run_ablation_grid(const std::vector<AblationSpec>& specs, const TrainConfig& base,
                                               const SplitProvider& splits, int workers = 1);
std::vector<AblationOutcome> run_ablation_grid(const std::vector<AblationSpec>& specs, const TrainConfig& base,
                                               const DatasetSplit& split, int workers = 1);

void write_grid_csv(std::ostream& out, const std::vector<AblationOutcome>& outcomes);

// Grid file: optional `presets: [mask_ratio, hops]` and an `entries` list of
// {name, variant, overrides: {key: value}, timestamps}.
std::vector<AblationSpec> parse_grid(const std::string& yaml_text);
std::vector<AblationSpec> load_grid(const std::filesystem::path& path);

}  // namespace graphids
