#pragma once

// Transformer encoder-decoder that reconstructs windows of flow embeddings
// under a random symmetric attention mask.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "graphids/autograd.hpp"

namespace graphids {

// Shape and masks of the sequence fed to a reconstructor. Attention is
// computed inside each window of `window_size` positions.
struct WindowContext {
  int windows = 1;
  int window_size = 1;
  std::shared_ptr<const std::vector<std::uint8_t>> valid;
  std::shared_ptr<const std::vector<std::uint8_t>> masked;  // null: no attention masking
  std::size_t n_valid = 0;

  std::size_t size() const { return static_cast<std::size_t>(windows) * window_size; }
};

class Reconstructor {
 public:
  virtual ~Reconstructor() = default;
  virtual int input_dim() const = 0;
  virtual Var forward(Tape& tape, Var input, const WindowContext& ctx, Mode mode,
                      Rng& dropout_rng) const = 0;
};

// Embeddings packed in stream order into windows x window_size slots; the
// tail of the last batch is zero padding.
struct WindowBatch {
  int windows = 1;
  int window_size = 1;
  Mat embeddings;
  std::vector<std::int64_t> source;  // stream row per slot, -1 for padding
  std::vector<std::uint8_t> valid;
  std::vector<std::uint8_t> masked;  // empty when unmasked
  std::size_t n_valid = 0;

  std::size_t size() const { return source.size(); }
  WindowContext context() const;
};

// Slot -> stream row maps, one per window batch; no batch for an empty stream.
std::vector<std::vector<std::int64_t>> plan_windows(std::size_t n_items, int window_size,
                                                    int windows);
std::vector<WindowBatch> assemble_windows(const Mat& stream, int window_size, int windows);

// floor(ratio * n_valid) distinct positions in [0, n_valid), ascending.
std::size_t mask_count(std::size_t n_valid, double ratio);
std::vector<std::size_t> sample_attention_mask(std::size_t n_valid, double ratio, Rng& rng);
std::vector<std::size_t> sample_attention_mask(std::size_t n_valid, double ratio,
                                               std::uint64_t seed);
// Marks sampled positions among the valid slots of `batch`.
void attach_attention_mask(WindowBatch& batch, double ratio, Rng& rng);

enum class PositionalKind { None, Sinusoidal, Learnable };
enum class MaskMode { MaskedToAll, MaskedPairs };

PositionalKind parse_positional_kind(std::string_view s);
std::string_view positional_kind_name(PositionalKind k);
MaskMode parse_mask_mode(std::string_view s);
std::string_view mask_mode_name(MaskMode m);

// sin(pos / 10000^(2i/d)) on even columns, cos on odd columns.
Mat sinusoidal_encoding(int length, int dim);
// None: zeros. Learnable: the initial value of the trainable table.
Mat positional_encoding(PositionalKind kind, int length, int dim, Rng* init_rng = nullptr);

struct MaeConfig {
  int input_dim = 0;
  int model_dim = 32;
  int num_layers = 1;
  int num_heads = 0;  // 0: model_dim / 16, at least one
  int ff_dim = 0;     // 0: 4 * model_dim
  double dropout = 0.0;
  PositionalKind positional = PositionalKind::None;
  int window_size = 512;
  MaskMode mask_mode = MaskMode::MaskedToAll;
};

int resolve_heads(int model_dim, int requested);

class TransformerMae : public Reconstructor {
 public:
  TransformerMae(const MaeConfig& config, ParameterStore& store, Rng& init_rng);

  const MaeConfig& config() const { return config_; }
  int input_dim() const override { return config_.input_dim; }
  int heads() const { return heads_; }
  bool has_positional_parameters() const { return learned_pe_ != nullptr; }

  Var forward(Tape& tape, Var input, const WindowContext& ctx, Mode mode,
              Rng& dropout_rng) const override;

 private:
  struct Dense {
    Parameter* w = nullptr;
    Parameter* b = nullptr;
  };
  struct Norm {
    Parameter* gamma = nullptr;
    Parameter* beta = nullptr;
  };
  struct Attn {
    Dense q, k, v, o;
  };
  struct EncoderBlock {
    Attn self_attn;
    Norm norm1, norm2;
    Dense ff1, ff2;
  };
  struct DecoderBlock {
    Attn self_attn, cross_attn;
    Norm norm1, norm2, norm3;
    Dense ff1, ff2;
  };

  Dense make_dense(ParameterStore& store, const std::string& name, int in, int out, Rng& rng);
  Norm make_norm(ParameterStore& store, const std::string& name, int dim);
  Attn make_attn(ParameterStore& store, const std::string& name, Rng& rng);

  Var dense(Tape& tape, Var x, const Dense& d) const;
  Var norm(Tape& tape, Var x, const Norm& n) const;
  Var mha(Tape& tape, Var xq, Var xkv, const Attn& a, const AttentionLayout& layout,
          MaskRule rule) const;
  Var feed_forward(Tape& tape, Var x, const Dense& ff1, const Dense& ff2) const;
  Var drop(Var x, Mode mode, Rng& rng) const;

  MaeConfig config_;
  int heads_ = 1;
  int ff_dim_ = 0;
  Dense in_proj_, out_proj_;
  std::vector<EncoderBlock> encoder_;
  std::vector<DecoderBlock> decoder_;
  Parameter* learned_pe_ = nullptr;
  Mat fixed_pe_;
};

// Per-position reconstruction error s_i = ||h_i - h_hat_i||^2. Padded
// positions carry no score: they are reported as 0 with valid == 0.
struct Reconstruction {
  Mat h_hat;
  std::vector<double> scores;
  std::vector<std::uint8_t> valid;
};

Reconstruction make_reconstruction(const Mat& h, const Mat& h_hat,
                                   const std::vector<std::uint8_t>& valid);
Reconstruction mae_forward(const Reconstructor& model, const WindowBatch& batch, Mode mode,
                           Rng& dropout_rng);
// Mean of the scores over valid positions.
double mae_loss(const std::vector<double>& scores, const std::vector<std::uint8_t>& valid);
double mae_loss(const Reconstruction& r);

}  // namespace graphids
