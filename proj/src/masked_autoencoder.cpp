#include "graphids/masked_autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "graphids/error.hpp"
#include "graphids/gnn_encoder.hpp"

namespace graphids {

WindowContext WindowBatch::context() const {
  WindowContext ctx;
  ctx.windows = windows;
  ctx.window_size = window_size;
  ctx.valid = std::make_shared<const std::vector<std::uint8_t>>(valid);
  if (!masked.empty()) ctx.masked = std::make_shared<const std::vector<std::uint8_t>>(masked);
  ctx.n_valid = n_valid;
  return ctx;
}

std::vector<std::vector<std::int64_t>> plan_windows(std::size_t n_items, int window_size,
                                                    int windows) {
  if (window_size < 1 || windows < 1) throw Error("window_size and windows must be >= 1");
  const std::size_t cap = static_cast<std::size_t>(window_size) * static_cast<std::size_t>(windows);
  std::vector<std::vector<std::int64_t>> plans;
  for (std::size_t start = 0; start < n_items; start += cap) {
    std::vector<std::int64_t> slots(cap, -1);
    const std::size_t n = std::min(cap, n_items - start);
    for (std::size_t i = 0; i < n; ++i) slots[i] = static_cast<std::int64_t>(start + i);
    plans.push_back(std::move(slots));
  }
  return plans;
}

std::vector<WindowBatch> assemble_windows(const Mat& stream, int window_size, int windows) {
  std::vector<WindowBatch> out;
  for (auto& slots : plan_windows(static_cast<std::size_t>(stream.rows()), window_size, windows)) {
    WindowBatch b;
    b.windows = windows;
    b.window_size = window_size;
    b.embeddings = Mat::Zero(static_cast<Eigen::Index>(slots.size()), stream.cols());
    b.valid.assign(slots.size(), 0);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i] < 0) continue;
      b.embeddings.row(static_cast<Eigen::Index>(i)) = stream.row(slots[i]);
      b.valid[i] = 1;
      ++b.n_valid;
    }
    b.source = std::move(slots);
    out.push_back(std::move(b));
  }
  return out;
}

std::size_t mask_count(std::size_t n_valid, double ratio) {
  if (ratio < 0.0 || ratio >= 1.0) throw Error("mask_ratio must lie in [0, 1)");
  // The epsilon absorbs representation error in products such as 0.3 * 10.
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n_valid) + 1e-9));
}

std::vector<std::size_t> sample_attention_mask(std::size_t n_valid, double ratio, Rng& rng) {
  const std::size_t k = mask_count(n_valid, ratio);
  std::vector<std::size_t> all(n_valid);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(k);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), static_cast<std::ptrdiff_t>(k),
              rng);
  return picked;
}

std::vector<std::size_t> sample_attention_mask(std::size_t n_valid, double ratio,
                                               std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x3a5c);
  return sample_attention_mask(n_valid, ratio, rng);
}

void attach_attention_mask(WindowBatch& batch, double ratio, Rng& rng) {
  std::vector<std::size_t> valid_slots;
  for (std::size_t i = 0; i < batch.valid.size(); ++i)
    if (batch.valid[i] != 0) valid_slots.push_back(i);
  batch.masked.assign(batch.size(), 0);
  for (const std::size_t k : sample_attention_mask(valid_slots.size(), ratio, rng))
    batch.masked[valid_slots[k]] = 1;
}

PositionalKind parse_positional_kind(std::string_view s) {
  if (s == "none") return PositionalKind::None;
  if (s == "sinusoidal") return PositionalKind::Sinusoidal;
  if (s == "learnable") return PositionalKind::Learnable;
  throw Error("unknown positional encoding '" + std::string(s) + "'");
}

std::string_view positional_kind_name(PositionalKind k) {
  switch (k) {
    case PositionalKind::None:
      return "none";
    case PositionalKind::Sinusoidal:
      return "sinusoidal";
    case PositionalKind::Learnable:
      return "learnable";
  }
  return "none";
}

MaskMode parse_mask_mode(std::string_view s) {
  if (s == "masked_to_all") return MaskMode::MaskedToAll;
  if (s == "masked_pairs") return MaskMode::MaskedPairs;
  throw Error("unknown mask mode '" + std::string(s) + "'");
}

std::string_view mask_mode_name(MaskMode m) {
  return m == MaskMode::MaskedToAll ? "masked_to_all" : "masked_pairs";
}

Mat sinusoidal_encoding(int length, int dim) {
  if (dim % 2 != 0) throw Error("sinusoidal positional encoding needs an even dimension");
  Mat pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / dim);
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Mat positional_encoding(PositionalKind kind, int length, int dim, Rng* init_rng) {
  switch (kind) {
    case PositionalKind::None:
      return Mat::Zero(length, dim);
    case PositionalKind::Sinusoidal:
      return sinusoidal_encoding(length, dim);
    case PositionalKind::Learnable: {
      if (init_rng == nullptr) throw Error("learnable positional encoding needs an init RNG");
      std::normal_distribution<double> n(0.0, 0.02);
      Mat p(length, dim);
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = n(*init_rng);
      return p;
    }
  }
  return Mat::Zero(length, dim);
}

int resolve_heads(int model_dim, int requested) {
  const int heads = requested > 0 ? requested : std::max(1, model_dim / 16);
  if (model_dim % heads != 0)
    throw Error("attention heads (" + std::to_string(heads) + ") must divide embed_dim (" +
                std::to_string(model_dim) + ")");
  return heads;
}

TransformerMae::Dense TransformerMae::make_dense(ParameterStore& store, const std::string& name,
                                                 int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Dense d;
  d.w = &store.add(name + ".weight", ParamGroup::Autoencoder, init_uniform(in, out, bound, rng));
  d.b = &store.add(name + ".bias", ParamGroup::Autoencoder, init_uniform(1, out, bound, rng));
  return d;
}

TransformerMae::Norm TransformerMae::make_norm(ParameterStore& store, const std::string& name,
                                               int dim) {
  Norm n;
  n.gamma = &store.add(name + ".gamma", ParamGroup::Autoencoder, Mat::Ones(1, dim));
  n.beta = &store.add(name + ".beta", ParamGroup::Autoencoder, Mat::Zero(1, dim));
  return n;
}

TransformerMae::Attn TransformerMae::make_attn(ParameterStore& store, const std::string& name,
                                               Rng& rng) {
  const int d = config_.model_dim;
  Attn a;
  a.q = make_dense(store, name + ".q", d, d, rng);
  a.k = make_dense(store, name + ".k", d, d, rng);
  a.v = make_dense(store, name + ".v", d, d, rng);
  a.o = make_dense(store, name + ".out", d, d, rng);
  return a;
}

TransformerMae::TransformerMae(const MaeConfig& config, ParameterStore& store, Rng& init_rng)
    : config_(config) {
  if (config_.input_dim <= 0 || config_.model_dim <= 0) throw Error("mae: dimensions must be positive");
  if (config_.num_layers < 1) throw Error("mae: num_layers must be >= 1");
  if (config_.window_size < 1) throw Error("mae: window_size must be >= 1");
  if (config_.dropout < 0.0 || config_.dropout >= 1.0) throw Error("mae: dropout must lie in [0, 1)");
  heads_ = resolve_heads(config_.model_dim, config_.num_heads);
  ff_dim_ = config_.ff_dim > 0 ? config_.ff_dim : 4 * config_.model_dim;

  const int d = config_.model_dim;
  in_proj_ = make_dense(store, "mae.in_proj", config_.input_dim, d, init_rng);
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "mae.encoder" + std::to_string(l);
    EncoderBlock b;
    b.self_attn = make_attn(store, p + ".self_attn", init_rng);
    b.norm1 = make_norm(store, p + ".norm1", d);
    b.ff1 = make_dense(store, p + ".ff1", d, ff_dim_, init_rng);
    b.ff2 = make_dense(store, p + ".ff2", ff_dim_, d, init_rng);
    b.norm2 = make_norm(store, p + ".norm2", d);
    encoder_.push_back(b);
  }
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "mae.decoder" + std::to_string(l);
    DecoderBlock b;
    b.self_attn = make_attn(store, p + ".self_attn", init_rng);
    b.norm1 = make_norm(store, p + ".norm1", d);
    b.cross_attn = make_attn(store, p + ".cross_attn", init_rng);
    b.norm2 = make_norm(store, p + ".norm2", d);
    b.ff1 = make_dense(store, p + ".ff1", d, ff_dim_, init_rng);
    b.ff2 = make_dense(store, p + ".ff2", ff_dim_, d, init_rng);
    b.norm3 = make_norm(store, p + ".norm3", d);
    decoder_.push_back(b);
  }
  out_proj_ = make_dense(store, "mae.out_proj", d, config_.input_dim, init_rng);

  if (config_.positional == PositionalKind::Learnable) {
    learned_pe_ = &store.add("mae.positional", ParamGroup::Autoencoder,
                             positional_encoding(PositionalKind::Learnable, config_.window_size, d,
                                                 &init_rng));
  } else if (config_.positional == PositionalKind::Sinusoidal) {
    fixed_pe_ = sinusoidal_encoding(config_.window_size, d);
  }
}

Var TransformerMae::dense(Tape& tape, Var x, const Dense& d) const {
  return ag::linear(x, tape.parameter(*d.w), tape.parameter(*d.b));
}

Var TransformerMae::norm(Tape& tape, Var x, const Norm& n) const {
  return ag::layer_norm(x, tape.parameter(*n.gamma), tape.parameter(*n.beta));
}

Var TransformerMae::mha(Tape& tape, Var xq, Var xkv, const Attn& a, const AttentionLayout& layout,
                        MaskRule rule) const {
  const Var q = dense(tape, xq, a.q);
  const Var k = dense(tape, xkv, a.k);
  const Var v = dense(tape, xkv, a.v);
  return dense(tape, ag::attention(q, k, v, layout, rule), a.o);
}

Var TransformerMae::feed_forward(Tape& tape, Var x, const Dense& ff1, const Dense& ff2) const {
  return dense(tape, ag::relu(dense(tape, x, ff1)), ff2);
}

Var TransformerMae::drop(Var x, Mode mode, Rng& rng) const {
  if (mode != Mode::Train || config_.dropout <= 0.0) return x;
  return ag::mul_const(x, ag::dropout_mask(x.rows(), x.cols(), config_.dropout, rng));
}

Var TransformerMae::forward(Tape& tape, Var input, const WindowContext& ctx, Mode mode,
                            Rng& dropout_rng) const {
  if (input.cols() != config_.input_dim)
    throw ShapeError("mae: input width " + std::to_string(input.cols()) +
                     " does not match input_dim " + std::to_string(config_.input_dim));
  if (static_cast<std::size_t>(input.rows()) != ctx.size())
    throw ShapeError("mae: input rows do not match windows * window_size");
  if (config_.positional != PositionalKind::None && ctx.window_size > config_.window_size)
    throw ShapeError("mae: window longer than the positional encoding table");

  AttentionLayout layout;
  layout.windows = ctx.windows;
  layout.window_size = ctx.window_size;
  layout.heads = heads_;
  layout.valid = ctx.valid;
  layout.masked = mode == Mode::Train ? ctx.masked : nullptr;
  const MaskRule self_rule =
      config_.mask_mode == MaskMode::MaskedToAll ? MaskRule::MaskedToAll : MaskRule::MaskedPairs;

  Var x = dense(tape, input, in_proj_);
  if (learned_pe_ != nullptr)
    x = ag::add_periodic_rows(x, tape.parameter(*learned_pe_), ctx.window_size);
  else if (config_.positional == PositionalKind::Sinusoidal)
    x = ag::add_periodic_rows(x, tape.constant(fixed_pe_.topRows(ctx.window_size)), ctx.window_size);

  Var mem = x;
  for (const auto& b : encoder_) {
    mem = norm(tape, ag::add(mem, drop(mha(tape, mem, mem, b.self_attn, layout, self_rule), mode, dropout_rng)), b.norm1);
    mem = norm(tape, ag::add(mem, drop(feed_forward(tape, mem, b.ff1, b.ff2), mode, dropout_rng)), b.norm2);
  }
  Var y = x;
  for (const auto& b : decoder_) {
    y = norm(tape, ag::add(y, drop(mha(tape, y, y, b.self_attn, layout, self_rule), mode, dropout_rng)), b.norm1);
    y = norm(tape, ag::add(y, drop(mha(tape, y, mem, b.cross_attn, layout, MaskRule::CrossKeys), mode, dropout_rng)), b.norm2);
    y = norm(tape, ag::add(y, drop(feed_forward(tape, y, b.ff1, b.ff2), mode, dropout_rng)), b.norm3);
  }
  return dense(tape, y, out_proj_);
}

Reconstruction make_reconstruction(const Mat& h, const Mat& h_hat,
                                   const std::vector<std::uint8_t>& valid) {
  if (h.rows() != h_hat.rows() || h.cols() != h_hat.cols())
    throw ShapeError("reconstruction shape differs from its input");
  if (valid.size() != static_cast<std::size_t>(h.rows()))
    throw ShapeError("validity mask length mismatch");
  Reconstruction r;
  r.h_hat = h_hat;
  r.valid = valid;
  r.scores.assign(valid.size(), 0.0);
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i] != 0)
      r.scores[i] = (h.row(static_cast<Eigen::Index>(i)) - h_hat.row(static_cast<Eigen::Index>(i)))
                        .squaredNorm();
  return r;
}

Reconstruction mae_forward(const Reconstructor& model, const WindowBatch& batch, Mode mode,
                           Rng& dropout_rng) {
  if (batch.embeddings.cols() != model.input_dim())
    throw ShapeError("mae_forward: embedding width does not match the model");
  if (mode == Mode::Train && batch.masked.empty())
    throw Error("mae_forward: train mode requires an attention mask");
  Tape tape(false);
  const Var in = tape.constant(batch.embeddings);
  const Var out = model.forward(tape, in, batch.context(), mode, dropout_rng);
  return make_reconstruction(batch.embeddings, out.value(), batch.valid);
}

double mae_loss(const std::vector<double>& scores, const std::vector<std::uint8_t>& valid) {
  if (scores.size() != valid.size()) throw ShapeError("mae_loss: scores and mask differ in length");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (valid[i] == 0) continue;
    sum += scores[i];
    ++n;
  }
  if (n == 0) throw Error("mae_loss: no valid positions");
  return sum / static_cast<double>(n);
}

double mae_loss(const Reconstruction& r) { return mae_loss(r.scores, r.valid); }

}  // namespace graphids
