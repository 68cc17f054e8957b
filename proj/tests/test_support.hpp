#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "graphids/autograd.hpp"
#include "graphids/flow_ingest.hpp"

namespace graphids::testing {

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;  // "param[index]"
  std::size_t checked = 0;
};

// Central differences of `loss` against the analytic gradients currently held
// by `store`. Every scalar of every parameter is perturbed.
inline GradCheck finite_difference_check(ParameterStore& store, const std::function<double()>& loss,
                                         double step = 1e-5) {
  GradCheck out;
  for (Parameter& p : store) {
    const Mat analytic = p.grad.size() == p.value.size() ? p.grad : Mat::Zero(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double x0 = p.value.data()[i];
      p.value.data()[i] = x0 + step;
      const double up = loss();
      p.value.data()[i] = x0 - step;
      const double down = loss();
      p.value.data()[i] = x0;
      const double numeric = (up - down) / (2.0 * step);
      const double r = rel_error(analytic.data()[i], numeric);
      ++out.checked;
      if (r > out.max_rel) {
        out.max_rel = r;
        out.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

// Brute-force PR-AUC: every distinct score is a threshold (predict score >= t);
// precision and recall are counted directly, points are sorted by threshold
// descending, an anchor at recall 0 carries the first precision, and the
// area is the trapezoid sum.
inline double brute_force_pr_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double positives = 0;
  for (auto l : labels) positives += l;
  std::vector<std::pair<double, double>> pts;  // recall, precision
  for (const double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        if (labels[i]) tp += 1;
        else fp += 1;
      }
    }
    pts.emplace_back(tp / positives, tp / (tp + fp));
  }
  double area = 0.0;
  double r0 = 0.0, p0 = pts.front().second;
  for (const auto& [r, p] : pts) {
    area += (r - r0) * (p + p0) / 2.0;
    r0 = r;
    p0 = p;
  }
  return area;
}

inline double brute_force_macro_f1(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                                   double threshold) {
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) tp += 1;
    else if (pred) fp += 1;
    else if (labels[i]) fn += 1;
    else tn += 1;
  }
  auto f1 = [](double t, double a, double b) { return t + a + b == 0 ? 0.0 : 2 * t / (2 * t + a + b); };
  return 0.5 * (f1(tp, fp, fn) + f1(tn, fn, fp));
}

// Best macro F1 over every cut between sorted distinct scores plus both
// extremes; ties keep the larger threshold.
inline std::pair<double, double> brute_force_best_threshold(const std::vector<double>& scores,
                                                            const std::vector<std::uint8_t>& labels) {
  std::vector<double> s = scores;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> cands{-INFINITY};
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    double mid = s[i] + (s[i + 1] - s[i]) / 2.0;
    if (mid <= s[i]) mid = s[i + 1];
    cands.push_back(mid);
  }
  cands.push_back(INFINITY);
  double best_t = cands.front(), best_f = -1.0;
  for (const double t : cands) {
    const double f = brute_force_macro_f1(scores, labels, t);
    if (f >= best_f) {
      best_f = f;
      best_t = t;
    }
  }
  return {best_t, best_f};
}

// Small labelled flow table: `hosts` benign hosts talking in a ring plus
// optional attack flows from one extra host with inflated features.
inline FlowTable toy_table(std::size_t flows, std::size_t attacks, std::size_t dim, std::uint64_t seed,
                           std::size_t hosts = 8) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, hosts - 1);
  FlowTable t;
  for (std::size_t j = 0; j < dim; ++j) t.feature_names.push_back("F" + std::to_string(j));
  for (std::size_t i = 0; i < flows; ++i) {
    FlowRecord r;
    const std::size_t a = pick(rng);
    const std::size_t b = (a + 1 + pick(rng) % 2) % hosts;
    r.src_ip = "10.1.0." + std::to_string(a + 1);
    r.dst_ip = "10.1.0." + std::to_string(b + 1);
    for (std::size_t j = 0; j < dim; ++j) r.features.push_back(10.0 + static_cast<double>(a + j) + n(rng));
    if (i < attacks) {
      r.src_ip = "10.9.9.9";
      for (double& f : r.features) f += 60.0;
      r.attack = true;
      r.attack_type = "planted";
    }
    t.records.push_back(std::move(r));
  }
  return t;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("graphids_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace graphids::testing
