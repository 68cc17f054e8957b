#include "graphids/optim.hpp"

#include <cmath>

#include "graphids/error.hpp"

namespace graphids {

double grad_norm(const ParameterStore& store) {
  double sq = 0.0;
  for (const auto& p : store)
    if (p.grad.size() == p.value.size()) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  const double norm = grad_norm(store);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (auto& p : store)
      if (p.grad.size() == p.value.size()) p.grad *= scale;
  }
  return norm;
}

AdamW::AdamW(ParameterStore& store, AdamWOptions options) : store_(&store), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (options_.gnn_weight_decay < 0.0 || options_.ae_weight_decay < 0.0)
    throw Error("weight decay must be non-negative");
  for (const auto& p : store) {
    m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
  }
}

double AdamW::weight_decay(ParamGroup group) const {
  return group == ParamGroup::Gnn ? options_.gnn_weight_decay : options_.ae_weight_decay;
}

void AdamW::step() {
  if (m_.size() != store_->size()) throw Error("optimizer state does not match the parameter store");
  if (options_.grad_clip > 0.0) clip_grad_norm(*store_, options_.grad_clip);
  ++steps_;
  const double lr = options_.learning_rate;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < store_->size(); ++i) {
    Parameter& p = (*store_)[i];
    p.value *= 1.0 - lr * weight_decay(p.group);
    if (p.grad.size() != p.value.size()) continue;  // no gradient reached this parameter
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * p.grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + options_.eps);
  }
}

}  // namespace graphids
