#pragma once

// Training configuration, loaded from a flat YAML file whose keys follow the
// hyperparameter names used in the shipped configs/ files.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "graphids/flow_graph.hpp"
#include "graphids/gnn_encoder.hpp"
#include "graphids/masked_autoencoder.hpp"
#include "graphids/simple_ae.hpp"

namespace graphids {

enum class Variant { GraphIds, TMae, SimpleAe };

Variant parse_variant(std::string_view s);
std::string_view variant_name(Variant v);

struct TrainConfig {
  Variant variant = Variant::GraphIds;

  // graph encoder
  int edim_out = 64;
  int gnn_hidden = 0;  // 0: edim_out
  int nhops = 1;
  std::size_t fanout = 32768;
  std::string agg_type = "mean";
  double gnn_dropout = 0.5;
  Direction direction = Direction::Both;

  // autoencoder
  int num_layers = 1;
  int embed_dim = 32;
  int num_heads = 0;  // 0: embed_dim / 16, at least one
  int ff_dim = 0;     // 0: 4 * embed_dim
  int window_size = 512;
  int ae_batch_size = 64;  // windows per window batch
  double mask_ratio = 0.15;
  MaskMode mask_mode = MaskMode::MaskedToAll;
  double ae_dropout = 0.0;
  PositionalKind positional_encoding = PositionalKind::None;
  int simple_ae_hidden = 0;       // 0: input width
  int simple_ae_bottleneck = -1;  // -1: half the input width

  // optimisation
  double learning_rate = 1e-4;
  double gnn_weight_decay = 0.6;
  double ae_weight_decay = 0.04;
  std::size_t gnn_batch_size = 16384;
  int max_epochs = 100;
  int patience = 20;
  double grad_clip = 0.0;  // 0: off
  std::uint64_t seed = 0;

  // Throws Error describing the first invalid field.
  void validate() const;

  // Key/value pairs in canonical order; values are what the YAML file holds.
  std::vector<std::pair<std::string, std::string>> items() const;
  // Sets one key from its textual value; unknown keys are rejected.
  void set(const std::string& key, const std::string& value);
};

TrainConfig load_config(const std::filesystem::path& path);
TrainConfig parse_config(const std::string& yaml_text);
std::string config_to_yaml(const TrainConfig& config);

// FNV-1a over the canonical key/value text as 16 hex digits. The seed is
// excluded, and so are graph-encoder keys for the graph-free variant.
std::string config_fingerprint(const TrainConfig& config);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

// Derived component configs.
GnnConfig gnn_config(const TrainConfig& config, int feature_dim);
MaeConfig mae_config(const TrainConfig& config, int input_dim);
SimpleAeConfig simple_ae_config(const TrainConfig& config, int input_dim);
SamplerOptions sampler_options(const TrainConfig& config);
// Width of the sequence the autoencoder reconstructs.
int reconstruction_dim(const TrainConfig& config, int feature_dim);

}  // namespace graphids
