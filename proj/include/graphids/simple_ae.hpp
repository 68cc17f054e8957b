#pragma once

// Two-layer MLP encoder and decoder used in place of the Transformer.
// Each position is reconstructed independently of its window.

#include "graphids/masked_autoencoder.hpp"

namespace graphids {

struct SimpleAeConfig {
  int input_dim = 0;
  int hidden_dim = 0;
  int bottleneck = 0;
};

// hidden: input_dim, bottleneck: max(1, input_dim / 2).
SimpleAeConfig default_simple_ae(int input_dim);

class SimpleAe : public Reconstructor {
 public:
  SimpleAe(const SimpleAeConfig& config, ParameterStore& store, Rng& init_rng);

  const SimpleAeConfig& config() const { return config_; }
  int input_dim() const override { return config_.input_dim; }

  Var forward(Tape& tape, Var input, const WindowContext& ctx, Mode mode,
              Rng& dropout_rng) const override;

 private:
  SimpleAeConfig config_;
  Parameter* w_[4] = {};
  Parameter* b_[4] = {};
};

}  // namespace graphids
