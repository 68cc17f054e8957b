#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "graphids/error.hpp"
#include "graphids/synth_traffic.hpp"

namespace graphids {
namespace {

std::string to_csv(const FlowTable& t) {
  std::ostringstream out;
  write_csv(out, t);
  return out.str();
}

const SynthResult& mixed() {
  static const SynthResult r = [] {
    SynthSpec s;
    s.seed = 1;
    return generate(s);
  }();
  return r;
}

// Flags a flow when any feature lies more than `cut` benign standard
// deviations from the benign mean.
std::vector<bool> zscore_flags(const FlowTable& t, double cut) {
  const std::size_t d = t.feature_dim();
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  std::size_t n = 0;
  for (const auto& r : t.records) {
    if (r.attack) continue;
    ++n;
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] += r.features[j];
      sq[j] += r.features[j] * r.features[j];
    }
  }
  std::vector<double> sd(d);
  for (std::size_t j = 0; j < d; ++j) {
    mean[j] /= static_cast<double>(n);
    sd[j] = std::sqrt(std::max(sq[j] / static_cast<double>(n) - mean[j] * mean[j], 1e-12));
  }
  std::vector<bool> flags;
  for (const auto& r : t.records) {
    bool f = false;
    for (std::size_t j = 0; j < d; ++j) f = f || std::abs(r.features[j] - mean[j]) > cut * sd[j];
    flags.push_back(f);
  }
  return flags;
}

TEST(Synth, PlantsRequestedAnomalies) {
  const FlowTable& t = mixed().table;
  ASSERT_EQ(t.records.size(), 20000u);
  std::map<std::string, std::size_t> by_type;
  for (const auto& r : t.records) {
    if (r.attack) ++by_type[r.attack_type];
    EXPECT_EQ(r.features.size(), 8u);
  }
  EXPECT_EQ(by_type["feature_outlier"] + by_type["topology_scan"], 1000u);
  EXPECT_EQ(by_type["feature_outlier"], 500u);
  std::set<std::string> hosts;
  for (const auto& r : t.records) {
    hosts.insert(r.src_ip);
    hosts.insert(r.dst_ip);
  }
  EXPECT_LE(hosts.size(), 50u);
  EXPECT_EQ(t.feature_names, synth_feature_columns(8));
}

TEST(Synth, DeterministicPerSeed) {
  SynthSpec s;
  s.n_flows = 3000;
  s.seed = 5;
  EXPECT_EQ(to_csv(generate(s).table), to_csv(generate(s).table));
  SynthSpec other = s;
  other.seed = 6;
  EXPECT_NE(to_csv(generate(s).table), to_csv(generate(other).table));
}

TEST(Synth, ScannersFanOutFarBeyondBenignHosts) {
  const FlowTable& t = mixed().table;
  std::map<std::string, std::set<std::string>> fan;
  std::set<std::string> scanners;
  for (const auto& r : t.records) {
    fan[r.src_ip].insert(r.dst_ip);
    if (r.attack_type == "topology_scan") scanners.insert(r.src_ip);
  }
  std::vector<std::size_t> benign;
  for (const auto& [ip, role] : mixed().host_roles)
    if ((role == "client" || role == "server") && fan.count(ip)) benign.push_back(fan[ip].size());
  ASSERT_FALSE(benign.empty());
  std::nth_element(benign.begin(), benign.begin() + static_cast<long>(benign.size() / 2), benign.end());
  const double median = static_cast<double>(benign[benign.size() / 2]);
  ASSERT_FALSE(scanners.empty());
  for (const auto& ip : scanners) EXPECT_GE(static_cast<double>(fan[ip].size()), 10.0 * median) << ip;
}

TEST(Synth, ZScoreBaselineSeesOutliersButNotScans) {
  const FlowTable& t = mixed().table;
  const auto flags = zscore_flags(t, 6.0);
  std::map<std::string, std::pair<std::size_t, std::size_t>> hit;  // type -> flagged, total
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    auto& h = hit[t.records[i].attack ? t.records[i].attack_type : "Benign"];
    h.first += flags[i] ? 1 : 0;
    ++h.second;
  }
  auto rate = [&](const std::string& k) { return double(hit[k].first) / double(hit[k].second); };
  EXPECT_GE(rate("feature_outlier"), 0.95);
  EXPECT_LE(rate("topology_scan"), rate("Benign") + 0.02);
}

TEST(Synth, CsvRoundTripThroughIngest) {
  SynthSpec s;
  s.n_flows = 500;
  const FlowTable t = generate(s).table;
  std::istringstream in(to_csv(t));
  const FlowTable back = parse_csv(in, Schema::V2, {.reduced_features = true});
  EXPECT_EQ(back.feature_names, t.feature_names);
  ASSERT_EQ(back.records.size(), t.records.size());
  EXPECT_EQ(to_csv(back), to_csv(t));
}

TEST(SynthSpec, ParseAndValidate) {
  const SynthSpec s = parse_synth_spec("n_hosts: 30\nn_flows: 1000\nanomaly_ratio: 0.1\n"
                                       "anomaly_kinds: [topology_scan, burst]\nseed: 9\n");
  EXPECT_EQ(s.n_hosts, 30u);
  EXPECT_EQ(s.kinds, (std::vector<AnomalyKind>{AnomalyKind::TopologyScan, AnomalyKind::Burst}));
  EXPECT_EQ(s.seed, 9u);
  EXPECT_THROW(parse_synth_spec("n_hostz: 3\n"), Error);
  EXPECT_THROW(parse_synth_spec("anomaly_kinds: [ddos]\n"), Error);
  EXPECT_THROW(parse_synth_spec("anomaly_ratio: 0.7\n"), Error);
}

TEST(SynthSpec, InfeasibleSpecsAreRejected) {
  SynthSpec tiny;
  tiny.n_hosts = 4;
  EXPECT_THROW(generate(tiny), Error);
  SynthSpec wide;
  wide.scan_fanout = 500;
  EXPECT_THROW(generate(wide), Error);
}

}  // namespace
}  // namespace graphids
