#pragma once

// Scores to decisions: PR-AUC, macro F1, validation threshold selection,
// and the evaluation report.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "graphids/flow_ingest.hpp"

namespace graphids {

class Model;

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;  // predictions are score >= threshold
};

// Operating points at every distinct score (descending), preceded by the
// anchor (recall 0, precision of the first point). Labels are 0/1.
std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);
// Trapezoidal area under pr_curve. Throws if labels hold a single class.
double pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Confusion confusion(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels);
// Unweighted mean of the benign and attack F1. A class that is neither
// predicted nor present scores 0.
double macro_f1(const Confusion& c);
double macro_f1(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> predict(std::span<const double> scores, double threshold);

// -inf, midpoints between consecutive distinct scores, +inf (ascending).
std::vector<double> threshold_candidates(std::span<const double> scores);

struct ThresholdChoice {
  double threshold = 0.0;
  double macro_f1 = 0.0;
  bool degenerate = false;  // fewer than two distinct scores
};

// Candidate with the highest macro F1; ties go to the larger threshold.
ThresholdChoice select_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ScoredFlows {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> attack_types;  // "Benign" for benign flows

  std::size_t size() const { return scores.size(); }
};

// Scales `records` with the training scaler, builds their host graph, and
// scores every flow in eval mode. Scores follow the input order.
ScoredFlows score_flows(Model& model, const FeatureScaler& scaler,
                        const std::vector<FlowRecord>& records, std::uint64_t seed);

// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct ScoreSummary {
  std::string attack_type;
  std::size_t count = 0;
  double min = 0, q25 = 0, median = 0, q75 = 0, q95 = 0, max = 0, mean = 0;
};

std::vector<ScoreSummary> summarize_scores(const ScoredFlows& flows);

// Per-type counts over shared log10-spaced score bins.
struct ScoreHistogram {
  std::vector<double> edges;
  std::vector<std::string> types;
  std::vector<std::vector<std::size_t>> counts;
};

ScoreHistogram score_histogram(const ScoredFlows& flows, std::size_t bins = 40);

struct EvalReport {
  std::string fingerprint;
  double threshold = 0.0;
  bool threshold_degenerate = false;
  double val_macro_f1 = 0.0;
  double val_pr_auc = 0.0;
  double pr_auc = 0.0;
  double macro_f1 = 0.0;
  double anomaly_ratio = 0.0;  // test-set positive rate (random-scorer PR-AUC)
  Confusion confusion;
  std::vector<PrPoint> pr_curve;
  std::vector<ScoreSummary> score_summary;
  ScoreHistogram histogram;
};

// Threshold from the validation flows, metrics on the test flows.
EvalReport evaluate_scores(const ScoredFlows& val, const ScoredFlows& test);
EvalReport evaluate(Model& model, const DatasetSplit& split, std::uint64_t seed);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void write_pr_curve_csv(std::ostream& out, const EvalReport& report);
void write_scores_csv(std::ostream& out, const ScoredFlows& flows);

}  // namespace graphids
