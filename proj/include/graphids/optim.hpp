#pragma once

// Adam with decoupled weight decay, one decay coefficient per parameter group.

#include <cstdint>
#include <vector>

#include "graphids/autograd.hpp"

namespace graphids {

struct AdamWOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double gnn_weight_decay = 0.0;
  double ae_weight_decay = 0.0;
  double grad_clip = 0.0;  // max global grad norm; 0 disables clipping
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);
double grad_norm(const ParameterStore& store);

class AdamW {
 public:
  AdamW(ParameterStore& store, AdamWOptions options);

  const AdamWOptions& options() const { return options_; }
  double weight_decay(ParamGroup group) const;

  // Applies one update from the gradients currently held by the store.
  void step();

  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t t) { steps_ = t; }
  std::vector<Mat>& first_moments() { return m_; }
  std::vector<Mat>& second_moments() { return v_; }
  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }

 private:
  ParameterStore* store_;
  AdamWOptions options_;
  std::vector<Mat> m_, v_;
  std::int64_t steps_ = 0;
};

}  // namespace graphids
