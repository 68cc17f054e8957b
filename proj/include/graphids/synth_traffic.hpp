#pragma once

// Labeled synthetic NetFlow traffic with planted anomalies.
//
// Benign hosts are split into segments, one service per segment. Clients
// talk to 2-3 servers of their own segment; every (client, server) pair
// draws flows from its own stable log-normal profile around that service. Anomalies come from dedicated attacker hosts:
//   feature_outlier  bulk transfers far outside every benign profile, sent to
//                    a pair of external sink hosts
//   topology_scan    one source fanning out to many benign hosts; each flow's
//                    features are drawn from a benign pair profile, so the
//                    feature marginals match benign traffic
//   burst            identical flows repeated on a single edge

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "graphids/flow_ingest.hpp"

namespace graphids {

enum class AnomalyKind { FeatureOutlier, TopologyScan, Burst };

AnomalyKind parse_anomaly_kind(std::string_view s);
std::string_view anomaly_kind_name(AnomalyKind k);

struct SynthSpec {
  std::size_t n_hosts = 50;
  std::size_t n_flows = 20000;
  double anomaly_ratio = 0.05;
  std::vector<AnomalyKind> kinds = {AnomalyKind::FeatureOutlier, AnomalyKind::TopologyScan};
  std::size_t feature_dim = 8;
  std::uint64_t seed = 0;
  std::size_t scanners = 2;
  std::size_t scan_fanout = 40;  // distinct destinations per scanner

  void validate() const;
};

SynthSpec parse_synth_spec(const std::string& yaml_text);
SynthSpec load_synth_spec(const std::filesystem::path& path);

// Feature columns emitted for a given dimension (a fixed prefix of the v2 set).
std::vector<std::string> synth_feature_columns(std::size_t feature_dim);

struct SynthResult {
  FlowTable table;
  std::map<std::string, std::string> host_roles;  // ip -> client|server|scanner|...
};

// Deterministic per seed. Throws Error for infeasible specs.
SynthResult generate(const SynthSpec& spec);

}  // namespace graphids
