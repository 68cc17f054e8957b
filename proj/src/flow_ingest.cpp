#include "graphids/flow_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "graphids/error.hpp"

namespace graphids {
namespace {

using json = nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_benign_name(std::string_view s) {
  const std::string l = lower(s);
  return l.empty() || l == "benign" || l == "normal" || l == "0" || l == "false";
}

enum class CellStatus { Ok, Empty, NonFinite, Unparsable };

CellStatus parse_number(std::string_view s, double& out) {
  out = 0.0;
  if (s.empty()) return CellStatus::Empty;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return CellStatus::Unparsable;
  if (!std::isfinite(v)) return CellStatus::NonFinite;
  out = v;
  return CellStatus::Ok;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

Schema parse_schema(std::string_view name) {
  const std::string l = lower(name);
  if (l == "v2") return Schema::V2;
  if (l == "v3") return Schema::V3;
  throw SchemaError("unknown schema '" + std::string(name) + "' (expected v2 or v3)");
}

std::string_view schema_name(Schema s) { return s == Schema::V2 ? "v2" : "v3"; }

const std::vector<std::string>& v2_netflow_columns() {
  static const std::vector<std::string> cols = {
      "IPV4_SRC_ADDR",
      "L4_SRC_PORT",
      "IPV4_DST_ADDR",
      "L4_DST_PORT",
      "PROTOCOL",
      "L7_PROTO",
      "IN_BYTES",
      "IN_PKTS",
      "OUT_BYTES",
      "OUT_PKTS",
      "TCP_FLAGS",
      "CLIENT_TCP_FLAGS",
      "SERVER_TCP_FLAGS",
      "FLOW_DURATION_MILLISECONDS",
      "DURATION_IN",
      "DURATION_OUT",
      "MIN_TTL",
      "MAX_TTL",
      "LONGEST_FLOW_PKT",
      "SHORTEST_FLOW_PKT",
      "MIN_IP_PKT_LEN",
      "MAX_IP_PKT_LEN",
      "SRC_TO_DST_SECOND_BYTES",
      "DST_TO_SRC_SECOND_BYTES",
      "RETRANSMITTED_IN_BYTES",
      "RETRANSMITTED_IN_PKTS",
      "RETRANSMITTED_OUT_BYTES",
      "RETRANSMITTED_OUT_PKTS",
      "SRC_TO_DST_AVG_THROUGHPUT",
      "DST_TO_SRC_AVG_THROUGHPUT",
      "NUM_PKTS_UP_TO_128_BYTES",
      "NUM_PKTS_128_TO_256_BYTES",
      "NUM_PKTS_256_TO_512_BYTES",
      "NUM_PKTS_512_TO_1024_BYTES",
      "NUM_PKTS_1024_TO_1514_BYTES",
      "TCP_WIN_MAX_IN",
      "TCP_WIN_MAX_OUT",
      "ICMP_TYPE",
      "ICMP_IPV4_TYPE",
      "DNS_QUERY_ID",
      "DNS_QUERY_TYPE",
      "DNS_TTL_ANSWER",
      "FTP_COMMAND_RET_CODE",
  };
  return cols;
}

const std::vector<std::string>& timestamp_columns() {
  static const std::vector<std::string> cols = {"FLOW_START_MILLISECONDS",
                                                "FLOW_END_MILLISECONDS"};
  return cols;
}

const std::vector<std::string>& v3_netflow_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = timestamp_columns();
    const auto& v2 = v2_netflow_columns();
    c.insert(c.end(), v2.begin(), v2.end());
    for (const char* extra :
         {"SRC_TO_DST_IAT_MIN", "SRC_TO_DST_IAT_MAX", "SRC_TO_DST_IAT_AVG",
          "SRC_TO_DST_IAT_STDDEV", "DST_TO_SRC_IAT_MIN", "DST_TO_SRC_IAT_MAX",
          "DST_TO_SRC_IAT_AVG", "DST_TO_SRC_IAT_STDDEV"})
      c.emplace_back(extra);
    return c;
  }();
  return cols;
}

FlowTable parse_csv(const std::filesystem::path& path, Schema schema, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open flow file: " + path.string());
  return parse_csv(in, schema, options);
}

FlowTable parse_csv(std::istream& in, Schema schema, const ParseOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("flow file is empty (no header row)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_line(line);
  std::unordered_map<std::string, std::size_t> column_index;
  for (std::size_t i = 0; i < header.size(); ++i) column_index.emplace(std::string(header[i]), i);

  auto require = [&](std::string_view name) -> std::size_t {
    const auto it = column_index.find(std::string(name));
    if (it == column_index.end())
      throw SchemaError("missing required column '" + std::string(name) + "' for schema " +
                        std::string(schema_name(schema)));
    return it->second;
  };

  const std::size_t src_col = require(kSrcIpColumn);
  const std::size_t dst_col = require(kDstIpColumn);
  const std::size_t label_col = require(kLabelColumn);
  const std::size_t attack_col = require(kAttackColumn);

  const auto& schema_cols = schema == Schema::V2 ? v2_netflow_columns() : v3_netflow_columns();
  const std::set<std::string> timestamps(timestamp_columns().begin(), timestamp_columns().end());
  auto is_feature = [&](const std::string& c) {
    if (c == kSrcIpColumn || c == kDstIpColumn) return false;
    if (timestamps.count(c) != 0 && !options.timestamps) return false;
    return true;
  };

  FlowTable table;
  std::vector<std::size_t> feature_cols;
  if (options.reduced_features) {
    const std::set<std::string> known(schema_cols.begin(), schema_cols.end());
    for (const auto& h : header) {
      const std::string name(h);
      if (known.count(name) != 0 && is_feature(name)) {
        table.feature_names.push_back(name);
        feature_cols.push_back(column_index.at(name));
      }
    }
  } else {
    for (const auto& c : schema_cols) {
      if (!is_feature(c)) continue;
      feature_cols.push_back(require(c));
      table.feature_names.push_back(c);
    }
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() < header.size())
      throw SchemaError("row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(header.size()));
    FlowRecord r;
    r.src_ip = std::string(cells[src_col]);
    r.dst_ip = std::string(cells[dst_col]);
    if (r.src_ip.empty() || r.dst_ip.empty())
      throw SchemaError("row " + std::to_string(line_no) + " has an empty host identifier");
    r.features.reserve(feature_cols.size());
    for (const std::size_t c : feature_cols) {
      double v = 0.0;
      const CellStatus st = parse_number(cells[c], v);
      if (st != CellStatus::Ok) ++table.zero_filled_cells;
      if (st == CellStatus::Unparsable) ++table.unparsable_cells;
      r.features.push_back(v);
    }
    const std::string_view label = cells[label_col];
    const std::string_view attack = cells[attack_col];
    double lv = 0.0;
    const bool label_attack = parse_number(label, lv) == CellStatus::Ok ? lv != 0.0
                                                                        : !is_benign_name(label);
    const bool named = !is_benign_name(attack);
    r.attack = label_attack || named;
    if (r.attack) r.attack_type = named ? std::string(attack) : std::string("Attack");
    table.records.push_back(std::move(r));
  }
  return table;
}

void write_csv(std::ostream& out, const FlowTable& table) {
  out << kSrcIpColumn << ',' << kDstIpColumn;
  for (const auto& f : table.feature_names) out << ',' << f;
  out << ',' << kLabelColumn << ',' << kAttackColumn << '\n';
  for (const auto& r : table.records) {
    if (r.features.size() != table.feature_names.size())
      throw ShapeError("write_csv: record feature count does not match header");
    out << r.src_ip << ',' << r.dst_ip;
    for (const double v : r.features) out << ',' << format_double(v);
    out << ',' << (r.attack ? 1 : 0) << ',' << (r.attack ? r.attack_type : std::string("Benign"))
        << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const FlowTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write flow file: " + path.string());
  write_csv(out, table);
}

FeatureScaler fit_scaler(const std::vector<FlowRecord>& train) {
  if (train.empty()) throw Error("fit_scaler: training set is empty");
  const std::size_t d = train.front().features.size();
  FeatureScaler s;
  s.min.assign(d, std::numeric_limits<double>::infinity());
  s.max.assign(d, -std::numeric_limits<double>::infinity());
  for (const auto& r : train) {
    if (r.attack) throw Error("fit_scaler: training set must contain benign flows only");
    if (r.features.size() != d) throw ShapeError("fit_scaler: inconsistent feature dimension");
    for (std::size_t j = 0; j < d; ++j) {
      s.min[j] = std::min(s.min[j], r.features[j]);
      s.max[j] = std::max(s.max[j], r.features[j]);
    }
  }
  s.degenerate.resize(d);
  for (std::size_t j = 0; j < d; ++j) s.degenerate[j] = s.min[j] == s.max[j] ? 1 : 0;
  return s;
}

double transform_value(const FeatureScaler& scaler, std::size_t j, double x) {
  if (scaler.degenerate[j] != 0) return 0.0;
  const double v = (x - scaler.min[j]) / (scaler.max[j] - scaler.min[j]);
  return std::clamp(v, FeatureScaler::kClipLo, FeatureScaler::kClipHi);
}

Mat transform(const FeatureScaler& scaler, const std::vector<FlowRecord>& records) {
  const std::size_t d = scaler.dim();
  Mat out(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& f = records[i].features;
    if (f.size() != d)
      throw ShapeError("transform: record has " + std::to_string(f.size()) +
                       " features, scaler expects " + std::to_string(d));
    for (std::size_t j = 0; j < d; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          transform_value(scaler, j, f[j]);
  }
  return out;
}

SplitManifest stratified_split(const std::vector<FlowRecord>& records, SplitRatios ratios,
                               std::uint64_t seed) {
  if (records.empty()) throw Error("stratified_split: no records");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw Error("stratified_split: ratios must be non-negative and sum to 1");

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].attack_type].push_back(i);

  SplitManifest m;
  m.seed = seed;
  m.ratios = ratios;
  Rng rng = make_rng(seed, 0x5b117);
  for (auto& [type, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = idx.size();
    std::size_t n_val = static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n)));
    std::size_t n_test =
        static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
    n_val = std::min(n_val, n);
    n_test = std::min(n_test, n - n_val);
    const bool attack = !type.empty();
    for (std::size_t k = 0; k < n; ++k) {
      if (k < n_val)
        m.val.push_back(idx[k]);
      else if (k < n_val + n_test)
        m.test.push_back(idx[k]);
      else if (attack)
        m.discarded.push_back(idx[k]);
      else
        m.train.push_back(idx[k]);
    }
  }
  for (auto* part : {&m.train, &m.val, &m.test, &m.discarded}) std::sort(part->begin(), part->end());
  return m;
}

FlowTable select_features(const FlowTable& table, const std::vector<std::string>& names) {
  std::vector<std::size_t> cols;
  std::string missing;
  for (const auto& n : names) {
    const auto it = std::find(table.feature_names.begin(), table.feature_names.end(), n);
    if (it == table.feature_names.end()) {
      missing += (missing.empty() ? "" : ", ") + n;
      continue;
    }
    cols.push_back(static_cast<std::size_t>(it - table.feature_names.begin()));
  }
  if (!missing.empty()) throw SchemaError("missing feature columns: " + missing);
  FlowTable out;
  out.feature_names = names;
  out.zero_filled_cells = table.zero_filled_cells;
  out.unparsable_cells = table.unparsable_cells;
  out.records.reserve(table.records.size());
  for (const auto& r : table.records) {
    FlowRecord x = r;
    x.features.clear();
    for (const std::size_t c : cols) x.features.push_back(r.features[c]);
    out.records.push_back(std::move(x));
  }
  return out;
}

DatasetSplit apply_split(const FlowTable& table, const SplitManifest& manifest) {
  DatasetSplit s;
  s.manifest = manifest;
  s.feature_names = table.feature_names;
  auto take = [&](const std::vector<std::size_t>& idx) {
    std::vector<FlowRecord> out;
    out.reserve(idx.size());
    for (const std::size_t i : idx) {
      if (i >= table.records.size()) throw Error("split manifest index out of range");
      out.push_back(table.records[i]);
    }
    return out;
  };
  s.train = take(manifest.train);
  s.val = take(manifest.val);
  s.test = take(manifest.test);
  s.scaler = fit_scaler(s.train);
  return s;
}

DatasetSplit stratified_split(const FlowTable& table, SplitRatios ratios, std::uint64_t seed) {
  return apply_split(table, stratified_split(table.records, ratios, seed));
}

DatasetStats dataset_stats(const std::vector<FlowRecord>& records) {
  DatasetStats st;
  st.flows = records.size();
  std::unordered_set<std::string> hosts;
  std::size_t attacks = 0;
  for (const auto& r : records) {
    hosts.insert(r.src_ip);
    hosts.insert(r.dst_ip);
    attacks += r.attack ? 1 : 0;
  }
  st.hosts = hosts.size();
  st.anomaly_ratio = records.empty() ? 0.0 : static_cast<double>(attacks) / records.size();
  return st;
}

std::string format_stats(const DatasetStats& stats) {
  std::ostringstream os;
  os << "flows=" << stats.flows << ", hosts=" << stats.hosts << ", anomaly_ratio=" << std::fixed
     << std::setprecision(4) << stats.anomaly_ratio;
  return os.str();
}

std::string scaler_to_json(const FeatureScaler& scaler) {
  json j;
  j["format"] = "graphids-minmax-scaler";
  j["version"] = 1;
  j["clip"] = {FeatureScaler::kClipLo, FeatureScaler::kClipHi};
  j["min"] = scaler.min;
  j["max"] = scaler.max;
  j["degenerate"] = scaler.degenerate;
  return j.dump(2);
}

FeatureScaler scaler_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "graphids-minmax-scaler") throw Error("not a scaler file");
    FeatureScaler s;
    s.min = j.at("min").get<std::vector<double>>();
    s.max = j.at("max").get<std::vector<double>>();
    s.degenerate = j.at("degenerate").get<std::vector<std::uint8_t>>();
    if (s.max.size() != s.min.size() || s.degenerate.size() != s.min.size())
      throw Error("scaler arrays have different lengths");
    return s;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed scaler file: ") + e.what());
  }
}

std::string manifest_to_json(const IngestManifest& m) {
  json j;
  j["format"] = "graphids-split-manifest";
  j["version"] = 1;
  j["source"] = m.source;
  j["schema"] = std::string(schema_name(m.schema));
  j["timestamps"] = m.options.timestamps;
  j["reduced_features"] = m.options.reduced_features;
  j["seed"] = m.split.seed;
  j["ratios"] = {m.split.ratios.train, m.split.ratios.val, m.split.ratios.test};
  j["feature_names"] = m.feature_names;
  j["train"] = m.split.train;
  j["val"] = m.split.val;
  j["test"] = m.split.test;
  j["discarded"] = m.split.discarded;
  return j.dump(1);
}

IngestManifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "graphids-split-manifest") throw Error("not a split manifest");
    IngestManifest m;
    m.source = j.at("source").get<std::string>();
    m.schema = parse_schema(j.at("schema").get<std::string>());
    m.options.timestamps = j.at("timestamps").get<bool>();
    m.options.reduced_features = j.at("reduced_features").get<bool>();
    m.split.seed = j.at("seed").get<std::uint64_t>();
    const auto r = j.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw Error("ratios must have three entries");
    m.split.ratios = {r[0], r[1], r[2]};
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.split.train = j.at("train").get<std::vector<std::size_t>>();
    m.split.val = j.at("val").get<std::vector<std::size_t>>();
    m.split.test = j.at("test").get<std::vector<std::size_t>>();
    m.split.discarded = j.at("discarded").get<std::vector<std::size_t>>();
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed split manifest: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace graphids
