#include "graphids/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "graphids/error.hpp"
#include "graphids/model.hpp"
#include "graphids/pipeline.hpp"

namespace graphids {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  for (const double s : scores)
    if (std::isnan(s)) throw Error("scores must not be NaN");
}

void require_both_classes(std::span<const std::uint8_t> labels, const char* what) {
  const auto pos = std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; });
  if (pos == 0 || static_cast<std::size_t>(pos) == labels.size())
    throw Error(std::string(what) + ": labels must contain both classes");
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  require_both_classes(labels, "pr_curve");
  const std::size_t positives = static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
  const auto idx = order_by_score(scores, true);
  std::vector<PrPoint> points;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (labels[idx[i]] != 0) ++tp; else ++fp;
    const bool last_of_group = i + 1 == idx.size() || scores[idx[i + 1]] != scores[idx[i]];
    if (!last_of_group) continue;
    points.push_back({static_cast<double>(tp) / static_cast<double>(positives),
                      static_cast<double>(tp) / static_cast<double>(tp + fp), scores[idx[i]]});
  }
  points.insert(points.begin(), PrPoint{0.0, points.front().precision, kInf});
  return points;
}

double pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto points = pr_curve(scores, labels);
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].recall - points[i - 1].recall) *
            (points[i].precision + points[i - 1].precision) / 2.0;
  return std::clamp(area, 0.0, 1.0);
}

Confusion confusion(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool l = labels[i] != 0;
    if (p && l) ++c.tp;
    else if (p) ++c.fp;
    else if (l) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double macro_f1(const Confusion& c) {
  // Benign F1 treats benign as the positive class: its tp is our tn.
  return (f1(c.tp, c.fp, c.fn) + f1(c.tn, c.fn, c.fp)) / 2.0;
}

double macro_f1(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels) {
  return macro_f1(confusion(predictions, labels));
}

std::vector<std::uint8_t> predict(std::span<const double> scores, double threshold) {
  std::vector<std::uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<double> threshold_candidates(std::span<const double> scores) {
  std::vector<double> distinct(scores.begin(), scores.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> out;
  out.reserve(distinct.size() + 1);
  out.push_back(-kInf);
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    const double lo = distinct[i], hi = distinct[i + 1];
    double mid = lo + (hi - lo) / 2.0;
    // Rounding can land on lo, which would move lo to the positive side.
    if (!(mid > lo) || mid > hi) mid = hi;
    out.push_back(mid);
  }
  out.push_back(kInf);
  return out;
}

ThresholdChoice select_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  require_both_classes(labels, "select_threshold");
  const std::vector<double> candidates = threshold_candidates(scores);
  const auto idx = order_by_score(scores, false);
  std::size_t total_pos = 0;
  for (const auto l : labels) total_pos += l != 0 ? 1 : 0;
  const std::size_t total_neg = labels.size() - total_pos;

  // Sweep candidates upwards; `below` counts flows with score < candidate.
  ThresholdChoice best;
  best.degenerate = candidates.size() <= 2;
  best.macro_f1 = -1.0;
  std::size_t cursor = 0, neg_below = 0, pos_below = 0;
  for (const double t : candidates) {
    while (cursor < idx.size() && scores[idx[cursor]] < t) {
      if (labels[idx[cursor]] != 0) ++pos_below; else ++neg_below;
      ++cursor;
    }
    Confusion c;
    c.tp = total_pos - pos_below;
    c.fn = pos_below;
    c.fp = total_neg - neg_below;
    c.tn = neg_below;
    const double m = macro_f1(c);
    if (m >= best.macro_f1) {
      best.macro_f1 = m;
      best.threshold = t;
    }
  }
  return best;
}

ScoredFlows score_flows(Model& model, const FeatureScaler& scaler,
                        const std::vector<FlowRecord>& records, std::uint64_t seed) {
  if (static_cast<int>(scaler.dim()) != model.feature_dim())
    throw ShapeError("score_flows: scaler has " + std::to_string(scaler.dim()) +
                     " features, model expects " + std::to_string(model.feature_dim()));
  for (const auto& r : records)
    if (static_cast<int>(r.features.size()) != model.feature_dim())
      throw ShapeError("score_flows: flow has " + std::to_string(r.features.size()) +
                       " features, model expects " + std::to_string(model.feature_dim()));
  ScoredFlows out;
  if (records.empty()) return out;
  const FlowGraph graph = FlowGraph::build(records, transform(scaler, records));
  out.scores = score_graph(model, graph, seed);
  for (const auto& r : records) {
    out.labels.push_back(r.attack ? 1 : 0);
    out.attack_types.push_back(r.attack ? r.attack_type : "Benign");
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<ScoreSummary> summarize_scores(const ScoredFlows& flows) {
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t i = 0; i < flows.size(); ++i) groups[flows.attack_types[i]].push_back(flows.scores[i]);
  std::vector<ScoreSummary> out;
  for (auto& [type, v] : groups) {
    ScoreSummary s;
    s.attack_type = type;
    s.count = v.size();
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    s.q25 = quantile(v, 0.25);
    s.median = quantile(v, 0.5);
    s.q75 = quantile(v, 0.75);
    s.q95 = quantile(v, 0.95);
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    out.push_back(s);
  }
  return out;
}

ScoreHistogram score_histogram(const ScoredFlows& flows, std::size_t bins) {
  ScoreHistogram h;
  if (flows.size() == 0 || bins == 0) return h;
  double lo = kInf, hi = 0.0;
  for (const double s : flows.scores) {
    if (s > 0.0) lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (!(hi > 0.0)) hi = 1.0;
  if (!std::isfinite(lo)) lo = hi;
  double llo = std::log10(lo), lhi = std::log10(hi);
  if (lhi - llo < 1e-9) {
    llo -= 0.5;
    lhi += 0.5;
  }
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges.push_back(std::pow(10.0, llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(bins)));
  std::map<std::string, std::vector<std::size_t>> counts;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    auto& c = counts[flows.attack_types[i]];
    c.resize(bins, 0);
    const double s = std::max(flows.scores[i], lo);
    const double pos = (std::log10(s) - llo) / (lhi - llo) * static_cast<double>(bins);
    const auto b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    ++c[b];
  }
  for (auto& [type, c] : counts) {
    h.types.push_back(type);
    h.counts.push_back(std::move(c));
  }
  return h;
}

EvalReport evaluate_scores(const ScoredFlows& val, const ScoredFlows& test) {
  EvalReport r;
  try {
    const ThresholdChoice choice = select_threshold(val.scores, val.labels);
    r.threshold = choice.threshold;
    r.threshold_degenerate = choice.degenerate;
    r.val_macro_f1 = choice.macro_f1;
    r.val_pr_auc = pr_auc(val.scores, val.labels);
  } catch (const Error& e) {
    throw Error(std::string("evaluate: validation split: ") + e.what());
  }
  try {
    r.pr_curve = pr_curve(test.scores, test.labels);
    r.pr_auc = pr_auc(test.scores, test.labels);
  } catch (const Error& e) {
    throw Error(std::string("evaluate: test split: ") + e.what());
  }
  r.confusion = confusion(predict(test.scores, r.threshold), test.labels);
  r.macro_f1 = macro_f1(r.confusion);
  r.anomaly_ratio = static_cast<double>(r.confusion.tp + r.confusion.fn) / static_cast<double>(test.size());
  r.score_summary = summarize_scores(test);
  r.histogram = score_histogram(test);
  return r;
}

EvalReport evaluate(Model& model, const DatasetSplit& split, std::uint64_t seed) {
  const ScoredFlows val = score_flows(model, split.scaler, split.val, seed);
  const ScoredFlows test = score_flows(model, split.scaler, split.test, seed);
  EvalReport r = evaluate_scores(val, test);
  r.fingerprint = config_fingerprint(model.config());
  return r;
}

namespace {

nlohmann::json num(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  return x;
}

double to_num(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j.get<double>();
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["fingerprint"] = r.fingerprint;
  j["threshold"] = num(r.threshold);
  j["threshold_degenerate"] = r.threshold_degenerate;
  j["val_macro_f1"] = r.val_macro_f1;
  j["val_pr_auc"] = r.val_pr_auc;
  j["pr_auc"] = r.pr_auc;
  j["macro_f1"] = r.macro_f1;
  j["anomaly_ratio"] = r.anomaly_ratio;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
  auto& curve = j["pr_curve"] = nlohmann::json::array();
  for (const auto& p : r.pr_curve) curve.push_back({num(p.recall), num(p.precision), num(p.threshold)});
  auto& summary = j["score_summary"] = nlohmann::json::array();
  for (const auto& s : r.score_summary)
    summary.push_back({{"attack_type", s.attack_type}, {"count", s.count}, {"min", s.min},
                       {"q25", s.q25}, {"median", s.median}, {"q75", s.q75}, {"q95", s.q95},
                       {"max", s.max}, {"mean", s.mean}});
  j["histogram"] = {{"edges", r.histogram.edges}, {"types", r.histogram.types}, {"counts", r.histogram.counts}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.threshold = to_num(j.at("threshold"));
    r.threshold_degenerate = j.at("threshold_degenerate").get<bool>();
    r.val_macro_f1 = j.at("val_macro_f1").get<double>();
    r.val_pr_auc = j.at("val_pr_auc").get<double>();
    r.pr_auc = j.at("pr_auc").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.anomaly_ratio = j.at("anomaly_ratio").get<double>();
    const auto& c = j.at("confusion");
    r.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                   c.at("tn").get<std::size_t>(), c.at("fn").get<std::size_t>()};
    for (const auto& p : j.at("pr_curve")) r.pr_curve.push_back({to_num(p[0]), to_num(p[1]), to_num(p[2])});
    for (const auto& s : j.at("score_summary")) {
      ScoreSummary x;
      x.attack_type = s.at("attack_type").get<std::string>();
      x.count = s.at("count").get<std::size_t>();
      x.min = s.at("min").get<double>();
      x.q25 = s.at("q25").get<double>();
      x.median = s.at("median").get<double>();
      x.q75 = s.at("q75").get<double>();
      x.q95 = s.at("q95").get<double>();
      x.max = s.at("max").get<double>();
      x.mean = s.at("mean").get<double>();
      r.score_summary.push_back(x);
    }
    const auto& h = j.at("histogram");
    r.histogram.edges = h.at("edges").get<std::vector<double>>();
    r.histogram.types = h.at("types").get<std::vector<std::string>>();
    r.histogram.counts = h.at("counts").get<std::vector<std::vector<std::size_t>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

void write_pr_curve_csv(std::ostream& out, const EvalReport& report) {
  out << "recall,precision,threshold\n";
  for (const auto& p : report.pr_curve) out << p.recall << ',' << p.precision << ',' << p.threshold << '\n';
}

void write_scores_csv(std::ostream& out, const ScoredFlows& flows) {
  out << "index,score,label,attack_type\n";
  const auto prec = out.precision(17);
  for (std::size_t i = 0; i < flows.size(); ++i)
    out << i << ',' << flows.scores[i] << ',' << static_cast<int>(flows.labels[i]) << ','
        << flows.attack_types[i] << '\n';
  out.precision(prec);
}

}  // namespace graphids
