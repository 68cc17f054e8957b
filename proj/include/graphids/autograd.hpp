#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records one forward pass; Tape::backward walks it in
// reverse and accumulates gradients into the bound Parameters.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "graphids/tensor.hpp"

namespace graphids {

enum class ParamGroup { Gnn, Autoencoder };

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::Autoencoder;
  Mat value;
  Mat grad;
};

// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, ParamGroup group, Mat init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> params_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat value);
  Var parameter(Parameter& p);

  // Records an op output. `fn` is dropped when no parent needs a gradient.
  Var record(Mat value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Mat value, std::span<const Var> parents, BackwardFn fn);

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  template <class Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  // Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);
  // Seeds the root gradient with an explicit upstream matrix.
  void backward(Var root, const Mat& upstream);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool consumed_ = false;
};

// Attention visibility rules. Every query may always attend to itself.
enum class MaskRule {
  None,         // valid keys only
  MaskedToAll,  // masked positions neither send nor receive attention
  MaskedPairs,  // only masked-to-masked pairs are blocked
  CrossKeys,    // masked keys are hidden from every other query
};

struct AttentionLayout {
  int windows = 1;
  int window_size = 1;
  int heads = 1;
  std::shared_ptr<const std::vector<std::uint8_t>> valid;   // per position
  std::shared_ptr<const std::vector<std::uint8_t>> masked;  // per position, may be null
};

bool attention_allowed(MaskRule rule, bool q_valid, bool q_masked, bool k_valid, bool k_masked,
                       bool same_position);

namespace ag {

Var matmul(Var a, Var b);
// x * w + b, with b a 1 x out row broadcast over rows.
Var linear(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var relu(Var x);
// Elementwise product with a constant matrix (dropout masks).
Var mul_const(Var x, Mat factor);
Var concat_cols(std::span<const Var> parts);
// Row gather; index -1 yields a zero row.
Var gather_rows(Var x, std::span<const std::int64_t> index);
// Mean of row segments [offsets[i], offsets[i+1]); empty segments give zeros.
Var segment_mean(Var x, std::span<const std::size_t> offsets);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// x[r] += table[r % period]
Var add_periodic_rows(Var x, Var table, int period);
// Per-row squared L2 norm, n x 1.
Var row_sq_norm(Var x);
// sum_i w_i x_i for an n x 1 input; returns 1 x 1.
Var weighted_sum(Var x, std::span<const double> weights);
Var scalar_sum(std::span<const Var> scalars);
// Scaled dot-product multi-head attention, computed independently per window.
Var attention(Var q, Var k, Var v, const AttentionLayout& layout, MaskRule rule);

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

}  // namespace ag
}  // namespace graphids
