#include "graphids/synth_traffic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <yaml-cpp/yaml.h>

#include "graphids/error.hpp"

namespace graphids {

AnomalyKind parse_anomaly_kind(std::string_view s) {
  if (s == "feature_outlier") return AnomalyKind::FeatureOutlier;
  if (s == "topology_scan") return AnomalyKind::TopologyScan;
  if (s == "burst") return AnomalyKind::Burst;
  throw Error("unknown anomaly kind '" + std::string(s) + "'");
}

std::string_view anomaly_kind_name(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::FeatureOutlier:
      return "feature_outlier";
    case AnomalyKind::TopologyScan:
      return "topology_scan";
    case AnomalyKind::Burst:
      return "burst";
  }
  return "feature_outlier";
}

namespace {

const std::vector<std::string>& all_columns() {
  static const std::vector<std::string> cols = {
      "PROTOCOL",  "L4_DST_PORT", "IN_BYTES", "OUT_BYTES",        "IN_PKTS",          "OUT_PKTS",
      "TCP_FLAGS", "FLOW_DURATION_MILLISECONDS", "MIN_TTL", "MAX_TTL", "LONGEST_FLOW_PKT",
      "SHORTEST_FLOW_PKT"};
  return cols;
}

// Median values of one traffic profile; byte, packet and duration entries
// are log-normal around these.
struct Profile {
  double protocol, port, in_bytes, out_bytes, in_pkts, out_pkts, flags, duration_ms;
};

const std::vector<Profile>& services() {
  static const std::vector<Profile> s = {
      {17, 53, 80, 160, 1, 1, 0, 1},               // name lookups
      {6, 80, 600, 8000, 6, 8, 27, 200},           // web
      {6, 443, 1500, 40000, 15, 35, 30, 1500},     // tls web
      {6, 22, 3000, 4000, 30, 30, 24, 20000},      // remote shell
      {6, 445, 20000, 2000, 25, 12, 26, 500},      // file share
  };
  return s;
}

// Per-pair deviation from the service medians, fixed for the pair's lifetime.
struct PairProfile {
  std::size_t client, server;
  Profile base;
  double bytes_shift, pkts_shift, duration_shift;
  double ttl;
  double weight;
};

struct RawFlow {
  std::size_t src, dst;
  std::vector<double> features;
  std::string attack_type;
};

class Generator {
 public:
  explicit Generator(const SynthSpec& spec) : spec_(spec), rng_(make_rng(spec.seed, 0x5e7)) {}

  SynthResult run();

 private:
  double lognormal(double median, double sigma) {
    if (sigma <= 0.0) return median;
    std::normal_distribution<double> n(0.0, sigma);
    return median * std::exp(n(rng_));
  }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

  std::vector<double> features_from(const Profile& p, double bytes_shift, double pkts_shift,
                                    double duration_shift, double ttl, double noise);
  std::vector<double> benign_features(const PairProfile& pair) {
    return features_from(pair.base, pair.bytes_shift, pair.pkts_shift, pair.duration_shift, pair.ttl, 0.3);
  }

  const SynthSpec& spec_;
  Rng rng_;
};

std::vector<double> Generator::features_from(const Profile& p, double bytes_shift, double pkts_shift,
                                             double duration_shift, double ttl, double noise) {
  const double in_pkts = std::max(1.0, std::round(lognormal(p.in_pkts * std::exp(pkts_shift), noise)));
  const double out_pkts = std::max(1.0, std::round(lognormal(p.out_pkts * std::exp(pkts_shift), noise)));
  const double in_bytes = std::max(in_pkts * 40.0, std::round(lognormal(p.in_bytes * std::exp(bytes_shift), noise)));
  const double out_bytes = std::max(out_pkts * 40.0, std::round(lognormal(p.out_bytes * std::exp(bytes_shift), noise)));
  const double duration = std::round(lognormal(p.duration_ms * std::exp(duration_shift), noise));
  const double longest = std::min(1500.0, std::round(std::max(in_bytes / in_pkts, out_bytes / out_pkts) * 1.4));
  const double shortest = std::min(longest, 40.0 + std::round(lognormal(12.0, 0.3)));
  const std::vector<double> all = {p.protocol, p.port, in_bytes, out_bytes, in_pkts, out_pkts,
                                   p.flags, duration, ttl, ttl, longest, shortest};
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(spec_.feature_dim)};
}

SynthResult Generator::run() {
  const bool outliers = std::count(spec_.kinds.begin(), spec_.kinds.end(), AnomalyKind::FeatureOutlier) > 0;
  const bool scans = std::count(spec_.kinds.begin(), spec_.kinds.end(), AnomalyKind::TopologyScan) > 0;
  const bool bursts = std::count(spec_.kinds.begin(), spec_.kinds.end(), AnomalyKind::Burst) > 0;

  // Host roles: attackers first, then servers, then clients.
  SynthResult result;
  std::vector<std::string> roles;
  std::vector<std::size_t> scanner_ids, outlier_src, outlier_sink, burst_src;
  auto add_host = [&](const char* role, std::vector<std::size_t>* list) {
    if (list != nullptr) list->push_back(roles.size());
    roles.emplace_back(role);
  };
  if (scans)
    for (std::size_t i = 0; i < spec_.scanners; ++i) add_host("scanner", &scanner_ids);
  if (outliers) {
    for (int i = 0; i < 2; ++i) add_host("exfil_source", &outlier_src);
    for (int i = 0; i < 2; ++i) add_host("exfil_sink", &outlier_sink);
  }
  if (bursts) add_host("burst_source", &burst_src);
  const std::size_t first_benign = roles.size();
  const std::size_t n_benign_hosts = spec_.n_hosts > first_benign ? spec_.n_hosts - first_benign : 0;
  if (n_benign_hosts < 4)
    throw Error("synth: " + std::to_string(spec_.n_hosts) + " hosts leave fewer than 4 benign hosts");
  if (scans && n_benign_hosts < spec_.scan_fanout)
    throw Error("synth: scan fan size " + std::to_string(spec_.scan_fanout) + " exceeds the " +
                std::to_string(n_benign_hosts) + " benign hosts available");
  // Benign hosts are split into segments, one service per segment; clients
  // only reach servers of their own segment.
  const std::size_t n_segments = std::min(services().size(), n_benign_hosts / 2);
  std::vector<std::vector<std::size_t>> seg_servers(n_segments), seg_clients(n_segments);
  std::vector<std::size_t> servers, clients;
  std::vector<std::size_t> host_segment(spec_.n_hosts, 0);
  for (std::size_t s = 0; s < n_segments; ++s) {
    const std::size_t size = n_benign_hosts / n_segments + (s < n_benign_hosts % n_segments ? 1 : 0);
    const std::size_t n_srv = std::max<std::size_t>(1, size / 4);
    for (std::size_t i = 0; i < size; ++i) {
      host_segment[roles.size()] = s;
      if (i < n_srv) {
        seg_servers[s].push_back(roles.size());
        add_host("server", &servers);
      } else {
        seg_clients[s].push_back(roles.size());
        add_host("client", &clients);
      }
    }
  }

  // Benign host pairs.
  std::vector<PairProfile> pairs;
  std::normal_distribution<double> shift(0.0, 0.5);
  std::normal_distribution<double> activity(0.0, 0.5);
  for (const std::size_t c : clients) {
    const std::size_t seg = host_segment[c];
    const auto& pool = seg_servers[seg];
    const std::size_t k = std::min<std::size_t>(pool.size(), 2 + uniform_index(2));
    std::vector<std::size_t> chosen;
    std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), static_cast<std::ptrdiff_t>(k), rng_);
    const double client_activity = std::exp(activity(rng_));
    const double ttl = seg % 2 == 0 ? 64.0 : 128.0;
    for (const std::size_t s : chosen) {
      PairProfile p;
      p.client = c;
      p.server = s;
      p.base = services()[seg];
      p.bytes_shift = shift(rng_);
      p.pkts_shift = shift(rng_) * 0.5;
      p.duration_shift = shift(rng_);
      p.ttl = ttl;
      p.weight = client_activity * std::exp(activity(rng_));
      pairs.push_back(p);
    }
  }
  std::vector<double> weights;
  for (const auto& p : pairs) weights.push_back(p.weight);
  std::discrete_distribution<std::size_t> pick_pair(weights.begin(), weights.end());

  const auto n_attack = static_cast<std::size_t>(std::llround(spec_.anomaly_ratio * static_cast<double>(spec_.n_flows)));
  std::vector<RawFlow> flows;
  flows.reserve(spec_.n_flows);
  for (std::size_t i = 0; i < spec_.n_flows - n_attack; ++i) {
    const PairProfile& p = pairs[pick_pair(rng_)];
    flows.push_back({p.client, p.server, benign_features(p), ""});
  }

  // Split the attack budget evenly across the requested kinds.
  std::vector<std::size_t> per_kind(spec_.kinds.size(), n_attack / spec_.kinds.size());
  for (std::size_t i = 0; i < n_attack % spec_.kinds.size(); ++i) ++per_kind[i];

  std::vector<std::size_t> benign_hosts(spec_.n_hosts - first_benign);
  std::iota(benign_hosts.begin(), benign_hosts.end(), first_benign);
  for (std::size_t k = 0; k < spec_.kinds.size(); ++k) {
    const std::string type(anomaly_kind_name(spec_.kinds[k]));
    switch (spec_.kinds[k]) {
      case AnomalyKind::TopologyScan: {
        std::vector<std::vector<std::size_t>> targets(scanner_ids.size());
        for (auto& t : targets)
          std::sample(benign_hosts.begin(), benign_hosts.end(), std::back_inserter(t),
                      static_cast<std::ptrdiff_t>(spec_.scan_fanout), rng_);
        for (std::size_t i = 0; i < per_kind[k]; ++i) {
          const std::size_t s = i % scanner_ids.size();
          // Cycle through the targets so every destination is reached.
          const std::size_t round = i / scanner_ids.size();
          const std::size_t dst = targets[s][round % targets[s].size()];
          flows.push_back({scanner_ids[s], dst, benign_features(pairs[pick_pair(rng_)]), type});
        }
        break;
      }
      case AnomalyKind::FeatureOutlier: {
        const Profile bulk{6, 443, 5.0e6, 2.0e5, 4000, 2500, 30, 6.0e5};
        for (std::size_t i = 0; i < per_kind[k]; ++i) {
          const double ttl = 64.0;
          flows.push_back({outlier_src[i % outlier_src.size()], outlier_sink[uniform_index(outlier_sink.size())],
                           features_from(bulk, 0.0, 0.0, 0.0, ttl, 0.4), type});
        }
        break;
      }
      case AnomalyKind::Burst: {
        const std::size_t target = servers[uniform_index(servers.size())];
        const Profile syn{6, services()[host_segment[target]].port, 44, 0, 1, 0, 2, 0};
        const std::vector<double> f = features_from(syn, 0.0, 0.0, 0.0, 64.0, 0.0);
        for (std::size_t i = 0; i < per_kind[k]; ++i) flows.push_back({burst_src[0], target, f, type});
        break;
      }
    }
  }
  std::shuffle(flows.begin(), flows.end(), rng_);

  auto ip = [](std::size_t h) {
    return "10.0." + std::to_string((h + 1) / 256) + "." + std::to_string((h + 1) % 256);
  };
  result.table.feature_names = synth_feature_columns(spec_.feature_dim);
  result.table.records.reserve(flows.size());
  for (auto& f : flows) {
    FlowRecord r;
    r.src_ip = ip(f.src);
    r.dst_ip = ip(f.dst);
    r.features = std::move(f.features);
    r.attack = !f.attack_type.empty();
    r.attack_type = std::move(f.attack_type);
    result.table.records.push_back(std::move(r));
  }
  for (std::size_t h = 0; h < roles.size(); ++h) result.host_roles[ip(h)] = roles[h];
  return result;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_hosts < 1) throw Error("synth: n_hosts must be >= 1");
  if (n_flows < 1) throw Error("synth: n_flows must be >= 1");
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 0.5)) throw Error("synth: anomaly_ratio must lie in (0, 0.5)");
  if (kinds.empty()) throw Error("synth: at least one anomaly kind is required");
  if (feature_dim < 1 || feature_dim > all_columns().size())
    throw Error("synth: feature_dim must lie in [1, " + std::to_string(all_columns().size()) + "]");
  if (std::count(kinds.begin(), kinds.end(), AnomalyKind::TopologyScan) > 0 && (scanners < 1 || scan_fanout < 1))
    throw Error("synth: scanners and scan_fanout must be >= 1");
}

std::vector<std::string> synth_feature_columns(std::size_t feature_dim) {
  if (feature_dim > all_columns().size()) throw Error("synth: feature_dim too large");
  std::vector<std::string> chosen(all_columns().begin(), all_columns().begin() + static_cast<std::ptrdiff_t>(feature_dim));
  return chosen;
}

SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  return Generator(spec).run();
}

SynthSpec parse_synth_spec(const std::string& yaml_text) {
  SynthSpec s;
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(std::string("synth spec: malformed YAML: ") + e.what());
  }
  if (!root.IsMap()) throw Error("synth spec: top level must be a mapping");
  try {
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      const YAML::Node& v = kv.second;
      if (key == "n_hosts") s.n_hosts = v.as<std::size_t>();
      else if (key == "n_flows") s.n_flows = v.as<std::size_t>();
      else if (key == "anomaly_ratio") s.anomaly_ratio = v.as<double>();
      else if (key == "feature_dim") s.feature_dim = v.as<std::size_t>();
      else if (key == "seed") s.seed = v.as<std::uint64_t>();
      else if (key == "scanners") s.scanners = v.as<std::size_t>();
      else if (key == "scan_fanout") s.scan_fanout = v.as<std::size_t>();
      else if (key == "anomaly_kinds") {
        s.kinds.clear();
        if (v.IsSequence())
          for (const auto& k : v) s.kinds.push_back(parse_anomaly_kind(k.as<std::string>()));
        else
          s.kinds.push_back(parse_anomaly_kind(v.as<std::string>()));
      } else {
        throw Error("synth spec: unknown key '" + key + "'");
      }
    }
  } catch (const YAML::Exception& e) {
    throw Error(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) { return parse_synth_spec(read_text_file(path)); }

}  // namespace graphids
