#include "graphids/simple_ae.hpp"

#include <algorithm>
#include <cmath>

#include "graphids/error.hpp"
#include "graphids/gnn_encoder.hpp"

namespace graphids {

SimpleAeConfig default_simple_ae(int input_dim) {
  return {input_dim, input_dim, std::max(1, input_dim / 2)};
}

SimpleAe::SimpleAe(const SimpleAeConfig& config, ParameterStore& store, Rng& init_rng)
    : config_(config) {
  if (config_.input_dim <= 0) throw Error("simple_ae: input_dim must be positive");
  if (config_.hidden_dim <= 0) throw Error("simple_ae: hidden_dim must be positive");
  if (config_.bottleneck <= 0) throw Error("simple_ae: bottleneck width must be positive");
  const int dims[5] = {config_.input_dim, config_.hidden_dim, config_.bottleneck,
                       config_.hidden_dim, config_.input_dim};
  const char* names[4] = {"ae.enc1", "ae.enc2", "ae.dec1", "ae.dec2"};
  for (int i = 0; i < 4; ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    w_[i] = &store.add(std::string(names[i]) + ".weight", ParamGroup::Autoencoder,
                       init_uniform(dims[i], dims[i + 1], bound, init_rng));
    b_[i] = &store.add(std::string(names[i]) + ".bias", ParamGroup::Autoencoder,
                       init_uniform(1, dims[i + 1], bound, init_rng));
  }
}

Var SimpleAe::forward(Tape& tape, Var input, const WindowContext& ctx, Mode, Rng&) const {
  if (input.cols() != config_.input_dim)
    throw ShapeError("simple_ae: input width does not match input_dim");
  if (static_cast<std::size_t>(input.rows()) != ctx.size())
    throw ShapeError("simple_ae: input rows do not match windows * window_size");
  Var x = input;
  for (int i = 0; i < 4; ++i) {
    x = ag::linear(x, tape.parameter(*w_[i]), tape.parameter(*b_[i]));
    // ReLU after the first layer of the encoder and of the decoder.
    if (i == 0 || i == 2) x = ag::relu(x);
  }
  return x;
}

}  // namespace graphids
