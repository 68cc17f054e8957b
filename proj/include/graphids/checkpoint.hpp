#pragma once

// Binary checkpoint: magic, JSON header (config, scaler, bookkeeping),
// raw little-endian doubles for parameters and optimizer moments, and an
// FNV-1a checksum over everything before it.

#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "graphids/model.hpp"
#include "graphids/optim.hpp"

namespace graphids {

struct Checkpoint {
  TrainConfig config;
  std::string fingerprint;
  std::vector<std::string> feature_names;
  FeatureScaler scaler;
  int epoch = 0;
  double val_pr_auc = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> param_names;
  std::vector<Mat> params;
  std::vector<Mat> adam_m;  // empty when saved without optimizer state
  std::vector<Mat> adam_v;
  std::int64_t adam_steps = 0;
  std::vector<std::pair<std::string, std::string>> rng_states;

  int feature_dim() const { return static_cast<int>(scaler.dim()); }
};

Checkpoint capture_checkpoint(const Model& model, const AdamW* optimizer, const FeatureScaler& scaler,
                              const std::vector<std::string>& feature_names, int epoch,
                              double val_pr_auc);
// Copies parameter values into `model`; names and shapes must match.
void restore_parameters(Model& model, const Checkpoint& ckpt);
void restore_optimizer(AdamW& optimizer, const Checkpoint& ckpt);
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

struct LoadOptions {
  const TrainConfig* expected_config = nullptr;  // compared by fingerprint
  bool force = false;                            // accept a fingerprint mismatch
  int expected_feature_dim = -1;
};

// Throws CheckpointError on a corrupt file, a feature-dimension mismatch,
// or a fingerprint mismatch without `force` (which downgrades it to a warning).
Checkpoint load_checkpoint(const std::filesystem::path& path, const LoadOptions& options = {},
                           std::vector<std::string>* warnings = nullptr);

}  // namespace graphids
