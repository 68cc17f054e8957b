#pragma once

// End-to-end training of the graph encoder and reconstructor with AdamW,
// validation PR-AUC after each epoch, and early stopping.

#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "graphids/checkpoint.hpp"
#include "graphids/pipeline.hpp"

namespace graphids {

// Stops once `patience` epochs have passed without a strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);

  // Records the metric of a 1-indexed epoch; returns true when training should stop.
  bool update(int epoch, double metric);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
  bool improved_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  // Validation PR-AUC without masking; NaN when validation lacks a class.
  double val_pr_auc = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct TrainOptions {
  PipelineProbe* probe = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<Model> model;  // holds the best checkpoint's parameters
  Checkpoint best;
  std::vector<EpochRecord> history;
  double initial_loss = 0.0;  // loss of the first batch, before any update
  int best_epoch = 0;
  bool early_stopped = false;
  // True when validation could not be scored and selection used train loss.
  bool selected_by_train_loss = false;
};

// Throws DivergenceError when a loss or parameter becomes non-finite.
TrainResult train(const TrainConfig& config, const DatasetSplit& split, const TrainOptions& options = {});

// Builds the host graph of `records` with scaled features.
FlowGraph build_scaled_graph(const std::vector<FlowRecord>& records, const FeatureScaler& scaler);

}  // namespace graphids
