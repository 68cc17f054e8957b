#include "graphids/autograd.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "graphids/error.hpp"

namespace graphids {

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw Error("invalid RNG state string");
}

Parameter& ParameterStore::add(std::string name, ParamGroup group, Mat init) {
  if (find(name) != nullptr) throw Error("duplicate parameter name: " + name);
  Parameter p;
  p.name = std::move(name);
  p.group = group;
  p.grad = Mat::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

const Mat& Var::value() const { return tape->value(id); }

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = grad_enabled_;
  n.param = grad_enabled_ ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Mat value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(Mat value, std::span<const Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (p.tape != this) throw Error("autograd: mixing variables from different tapes");
      if (nodes_[static_cast<std::size_t>(p.id)].requires_grad) n.requires_grad = true;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
  if (!root.valid() || root.tape != this) throw Error("backward: no recorded forward pass");
  if (value(root.id).size() != 1) throw ShapeError("backward: root must be a scalar");
  backward(root, Mat::Ones(1, 1));
}

void Tape::backward(Var root, const Mat& upstream) {
  if (!root.valid() || root.tape != this || nodes_.empty())
    throw Error("backward: no recorded forward pass");
  if (!grad_enabled_) throw Error("backward: tape was recorded without gradients");
  if (consumed_) throw Error("backward: tape already consumed");
  const Mat& rv = value(root.id);
  if (upstream.rows() != rv.rows() || upstream.cols() != rv.cols())
    throw ShapeError("backward: upstream gradient shape mismatch");
  consumed_ = true;
  accumulate(root.id, upstream);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param != nullptr) {
      Mat& g = n.param->grad;
      if (g.rows() != n.grad.rows() || g.cols() != n.grad.cols()) g.setZero(n.grad.rows(), n.grad.cols());
      g += n.grad;
    }
    if (n.backward) n.backward(*this, i);
  }
}

bool attention_allowed(MaskRule rule, bool q_valid, bool q_masked, bool k_valid, bool k_masked,
                       bool same_position) {
  if (same_position) return true;
  if (!q_valid || !k_valid) return false;
  switch (rule) {
    case MaskRule::None:
      return true;
    case MaskRule::MaskedToAll:
      return !q_masked && !k_masked;
    case MaskRule::MaskedPairs:
      return !(q_masked && k_masked);
    case MaskRule::CrossKeys:
      return !k_masked;
  }
  return false;
}

namespace ag {
namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

}  // namespace

Var matmul(Var a, Var b) {
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimension mismatch");
  Mat out = av * bv;
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(a.id)) t.accumulate(a.id, g * t.value(b.id).transpose());
    if (t.requires_grad(b.id)) t.accumulate(b.id, t.value(a.id).transpose() * g);
  });
}

Var linear(Var x, Var w, Var b) {
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  const Mat& bv = b.value();
  if (xv.cols() != wv.rows()) throw ShapeError("linear: input width does not match weight rows");
  if (bv.rows() != 1 || bv.cols() != wv.cols()) throw ShapeError("linear: bias shape mismatch");
  Mat out = xv * wv;
  out.rowwise() += bv.row(0);
  return x.tape->record(std::move(out), {x, w, b}, [x, w, b](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(x.id)) t.accumulate(x.id, g * t.value(w.id).transpose());
    if (t.requires_grad(w.id)) t.accumulate(w.id, t.value(x.id).transpose() * g);
    if (t.requires_grad(b.id)) t.accumulate(b.id, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Mat out = a.value() + b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a.id, t.grad(self));
    t.accumulate(b.id, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Mat out = a.value() - b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a.id, t.grad(self));
    if (t.requires_grad(b.id)) t.accumulate(b.id, -t.grad(self));
  });
}

Var relu(Var x) {
  Mat out = x.value().cwiseMax(0.0);
  return x.tape->record(std::move(out), {x}, [x](Tape& t, int self) {
    const Mat& xv = t.value(x.id);
    t.accumulate(x.id, (xv.array() > 0.0).cast<double>().matrix().cwiseProduct(t.grad(self)));
  });
}

Var mul_const(Var x, Mat factor) {
  require_same_shape(x.value(), factor, "mul_const");
  Mat out = x.value().cwiseProduct(factor);
  return x.tape->record(std::move(out), {x},
                        [x, factor = std::move(factor)](Tape& t, int self) {
                          t.accumulate(x.id, t.grad(self).cwiseProduct(factor));
                        });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), parts, [ps, offsets](Tape& t, int self) {
    const Mat& g = t.grad(self);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!t.requires_grad(ps[i].id)) continue;
      t.accumulate(ps[i].id, g.middleCols(offsets[i], t.value(ps[i].id).cols()));
    }
  });
}

Var gather_rows(Var x, std::span<const std::int64_t> index) {
  const Mat& xv = x.value();
  Mat out = Mat::Zero(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::int64_t r = index[i];
    if (r < 0) continue;
    if (r >= xv.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = xv.row(r);
  }
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return x.tape->record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& t, int self) {
    const Mat& g = t.grad(self);
    const Mat& xv = t.value(x.id);
    Mat dx = Mat::Zero(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] >= 0) dx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(x.id, dx);
  });
}

Var segment_mean(Var x, std::span<const std::size_t> offsets) {
  if (offsets.empty()) throw ShapeError("segment_mean: offsets must have at least one entry");
  const Mat& xv = x.value();
  if (offsets.back() != static_cast<std::size_t>(xv.rows()))
    throw ShapeError("segment_mean: offsets do not cover the input rows");
  const std::size_t segments = offsets.size() - 1;
  Mat out = Mat::Zero(static_cast<Eigen::Index>(segments), xv.cols());
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t lo = offsets[s], hi = offsets[s + 1];
    if (hi == lo) continue;
    out.row(static_cast<Eigen::Index>(s)) =
        xv.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo))
            .colwise()
            .sum() /
        static_cast<double>(hi - lo);
  }
  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return x.tape->record(std::move(out), {x}, [x, offs = std::move(offs)](Tape& t, int self) {
    const Mat& g = t.grad(self);
    const Mat& xv = t.value(x.id);
    Mat dx(xv.rows(), xv.cols());
    for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
      const std::size_t lo = offs[s], hi = offs[s + 1];
      if (hi == lo) continue;
      const RowVec share = g.row(static_cast<Eigen::Index>(s)) / static_cast<double>(hi - lo);
      for (std::size_t r = lo; r < hi; ++r) dx.row(static_cast<Eigen::Index>(r)) = share;
    }
    t.accumulate(x.id, dx);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Mat& xv = x.value();
  const Eigen::Index n = xv.rows(), d = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw ShapeError("layer_norm: affine parameter shape mismatch");
  Mat xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Mat out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
        const Mat& g = t.grad(self);
        if (t.requires_grad(gamma.id))
          t.accumulate(gamma.id, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(beta.id)) t.accumulate(beta.id, g.colwise().sum());
        if (!t.requires_grad(x.id)) return;
        const Mat dxhat = g.array().rowwise() * t.value(gamma.id).row(0).array();
        Mat dx(dxhat.rows(), dxhat.cols());
        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
          dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
        }
        t.accumulate(x.id, dx);
      });
}

Var add_periodic_rows(Var x, Var table, int period) {
  const Mat& xv = x.value();
  const Mat& tv = table.value();
  if (period <= 0 || tv.rows() < period || tv.cols() != xv.cols())
    throw ShapeError("add_periodic_rows: table shape mismatch");
  Mat out = xv;
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) += tv.row(r % period);
  return x.tape->record(std::move(out), {x, table}, [x, table, period](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.accumulate(x.id, g);
    if (!t.requires_grad(table.id)) return;
    Mat dt = Mat::Zero(t.value(table.id).rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) dt.row(r % period) += g.row(r);
    t.accumulate(table.id, dt);
  });
}

Var row_sq_norm(Var x) {
  Mat out = x.value().rowwise().squaredNorm();
  return x.tape->record(std::move(out), {x}, [x](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Mat dx = 2.0 * t.value(x.id);
    for (Eigen::Index r = 0; r < dx.rows(); ++r) dx.row(r) *= g(r, 0);
    t.accumulate(x.id, dx);
  });
}

Var weighted_sum(Var x, std::span<const double> weights) {
  const Mat& xv = x.value();
  if (xv.cols() != 1 || static_cast<std::size_t>(xv.rows()) != weights.size())
    throw ShapeError("weighted_sum: expects an n x 1 input matching the weights");
  Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  Mat out(1, 1);
  out(0, 0) = xv.col(0).dot(w);
  std::vector<double> ws(weights.begin(), weights.end());
  return x.tape->record(std::move(out), {x}, [x, ws = std::move(ws)](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    Mat dx(static_cast<Eigen::Index>(ws.size()), 1);
    for (std::size_t i = 0; i < ws.size(); ++i) dx(static_cast<Eigen::Index>(i), 0) = g * ws[i];
    t.accumulate(x.id, dx);
  });
}

Var scalar_sum(std::span<const Var> scalars) {
  if (scalars.empty()) throw ShapeError("scalar_sum: no inputs");
  Mat out = Mat::Zero(1, 1);
  for (const Var& s : scalars) {
    if (s.value().size() != 1) throw ShapeError("scalar_sum: inputs must be 1x1");
    out(0, 0) += s.value()(0, 0);
  }
  std::vector<Var> ss(scalars.begin(), scalars.end());
  return scalars[0].tape->record(std::move(out), scalars, [ss](Tape& t, int self) {
    for (const Var& s : ss) t.accumulate(s.id, t.grad(self));
  });
}

namespace {

// Softmax probabilities for one (window, head) block, with disallowed
// entries set to exactly zero.
Mat attention_probs(const Mat& q, const Mat& k, Eigen::Index row0, Eigen::Index col0,
                    Eigen::Index len, Eigen::Index dh, double scale,
                    const AttentionLayout& layout, MaskRule rule) {
  Mat s = q.block(row0, col0, len, dh) * k.block(row0, col0, len, dh).transpose() * scale;
  const auto& valid = *layout.valid;
  const std::vector<std::uint8_t>* masked = layout.masked.get();
  for (Eigen::Index i = 0; i < len; ++i) {
    const std::size_t qi = static_cast<std::size_t>(row0 + i);
    const bool qv = valid[qi] != 0;
    const bool qm = masked != nullptr && (*masked)[qi] != 0;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < len; ++j) {
      const std::size_t kj = static_cast<std::size_t>(row0 + j);
      const bool ok = attention_allowed(rule, qv, qm, valid[kj] != 0,
                                        masked != nullptr && (*masked)[kj] != 0, i == j);
      if (!ok) {
        s(i, j) = -std::numeric_limits<double>::infinity();
      } else if (s(i, j) > mx) {
        mx = s(i, j);
      }
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < len; ++j) {
      const double e = std::isinf(s(i, j)) && s(i, j) < 0 ? 0.0 : std::exp(s(i, j) - mx);
      s(i, j) = e;
      z += e;
    }
    s.row(i) /= z;
  }
  return s;
}

}  // namespace

Var attention(Var q, Var k, Var v, const AttentionLayout& layout, MaskRule rule) {
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  const Eigen::Index n = static_cast<Eigen::Index>(layout.windows) * layout.window_size;
  if (qv.rows() != n || kv.rows() != n || vv.rows() != n)
    throw ShapeError("attention: inputs must have windows * window_size rows");
  if (kv.cols() != qv.cols() || vv.cols() != qv.cols())
    throw ShapeError("attention: q, k, v widths differ");
  if (layout.heads <= 0 || qv.cols() % layout.heads != 0)
    throw ShapeError("attention: head count must divide the model width");
  if (!layout.valid || layout.valid->size() != static_cast<std::size_t>(n))
    throw ShapeError("attention: validity mask length mismatch");
  if (layout.masked && layout.masked->size() != static_cast<std::size_t>(n))
    throw ShapeError("attention: attention mask length mismatch");

  const Eigen::Index len = layout.window_size;
  const Eigen::Index dh = qv.cols() / layout.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat out(n, qv.cols());
  for (int w = 0; w < layout.windows; ++w) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(w) * len;
    for (int h = 0; h < layout.heads; ++h) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
      const Mat p = attention_probs(qv, kv, r0, c0, len, dh, scale, layout, rule);
      out.block(r0, c0, len, dh).noalias() = p * vv.block(r0, c0, len, dh);
    }
  }
  return q.tape->record(
      std::move(out), {q, k, v}, [q, k, v, layout, rule, len, dh, scale](Tape& t, int self) {
        const Mat& g = t.grad(self);
        const Mat& qv = t.value(q.id);
        const Mat& kv = t.value(k.id);
        const Mat& vv = t.value(v.id);
        Mat dq = Mat::Zero(qv.rows(), qv.cols());
        Mat dk = Mat::Zero(kv.rows(), kv.cols());
        Mat dv = Mat::Zero(vv.rows(), vv.cols());
        for (int w = 0; w < layout.windows; ++w) {
          const Eigen::Index r0 = static_cast<Eigen::Index>(w) * len;
          for (int h = 0; h < layout.heads; ++h) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
            const Mat p = attention_probs(qv, kv, r0, c0, len, dh, scale, layout, rule);
            const auto go = g.block(r0, c0, len, dh);
            dv.block(r0, c0, len, dh).noalias() += p.transpose() * go;
            const Mat dp = go * vv.block(r0, c0, len, dh).transpose();
            const Eigen::VectorXd rowdot = p.cwiseProduct(dp).rowwise().sum();
            Mat ds = p.cwiseProduct(dp.colwise() - rowdot);
            ds *= scale;
            dq.block(r0, c0, len, dh).noalias() += ds * kv.block(r0, c0, len, dh);
            dk.block(r0, c0, len, dh).noalias() += ds.transpose() * qv.block(r0, c0, len, dh);
          }
        }
        t.accumulate(q.id, dq);
        t.accumulate(k.id, dk);
        t.accumulate(v.id, dv);
      });
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must lie in [0, 1)");
  Mat m(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? s : 0.0;
  return m;
}

}  // namespace ag
}  // namespace graphids
