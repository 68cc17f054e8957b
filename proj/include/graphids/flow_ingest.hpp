#pragma once

// NetFlow CSV ingestion: typed records, stratified benign-only training
// split, and min-max feature scaling with clipping.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "graphids/tensor.hpp"

namespace graphids {

enum class Schema { V2, V3 };

Schema parse_schema(std::string_view name);
std::string_view schema_name(Schema s);

struct FlowRecord {
  std::string src_ip;
  std::string dst_ip;
  std::vector<double> features;
  bool attack = false;
  std::string attack_type;  // empty for benign flows

  bool operator==(const FlowRecord&) const = default;
};

struct ParseOptions {
  bool timestamps = false;  // keep FLOW_START/END_MILLISECONDS (v3 only)
  // Only identifier and label columns are required; every other recognised
  // schema column present in the header becomes a feature, in header order.
  bool reduced_features = false;
};

struct FlowTable {
  std::vector<std::string> feature_names;
  std::vector<FlowRecord> records;
  std::size_t zero_filled_cells = 0;  // empty, NaN/Inf or unparsable numeric cells
  std::size_t unparsable_cells = 0;   // subset of the above that were not numbers at all

  std::size_t feature_dim() const { return feature_names.size(); }
};

inline constexpr std::string_view kSrcIpColumn = "IPV4_SRC_ADDR";
inline constexpr std::string_view kDstIpColumn = "IPV4_DST_ADDR";
inline constexpr std::string_view kLabelColumn = "Label";
inline constexpr std::string_view kAttackColumn = "Attack";

// The 43 NetFlow fields of the v2 datasets (host identifiers included).
const std::vector<std::string>& v2_netflow_columns();
// v2 fields plus the 10 temporal v3 fields (two timestamps + eight IAT stats).
const std::vector<std::string>& v3_netflow_columns();
const std::vector<std::string>& timestamp_columns();

FlowTable parse_csv(const std::filesystem::path& path, Schema schema,
                    const ParseOptions& options = {});
FlowTable parse_csv(std::istream& in, Schema schema, const ParseOptions& options = {});

// Reorders/subsets feature columns to `names`; a missing name is a SchemaError.
FlowTable select_features(const FlowTable& table, const std::vector<std::string>& names);

// Writes the identifier, feature, and label columns in the dialect parse_csv reads.
void write_csv(std::ostream& out, const FlowTable& table);
void write_csv(const std::filesystem::path& path, const FlowTable& table);

struct FeatureScaler {
  static constexpr double kClipLo = -10.0;
  static constexpr double kClipHi = 10.0;

  std::vector<double> min;
  std::vector<double> max;
  std::vector<std::uint8_t> degenerate;

  std::size_t dim() const { return min.size(); }
  bool operator==(const FeatureScaler&) const = default;
};

FeatureScaler fit_scaler(const std::vector<FlowRecord>& train);
Mat transform(const FeatureScaler& scaler, const std::vector<FlowRecord>& records);
double transform_value(const FeatureScaler& scaler, std::size_t feature, double x);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Record indices into the source table, ascending within each partition.
struct SplitManifest {
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::vector<std::size_t> discarded;  // attack flows drawn into the train partition

  bool operator==(const SplitManifest& o) const {
    return seed == o.seed && train == o.train && val == o.val && test == o.test &&
           discarded == o.discarded;
  }
};

struct DatasetSplit {
  std::vector<FlowRecord> train;  // benign only
  std::vector<FlowRecord> val;
  std::vector<FlowRecord> test;
  FeatureScaler scaler;
  SplitManifest manifest;
  std::vector<std::string> feature_names;
};

SplitManifest stratified_split(const std::vector<FlowRecord>& records, SplitRatios ratios,
                               std::uint64_t seed);
// Materialises a manifest against its source table and fits the scaler on train.
DatasetSplit apply_split(const FlowTable& table, const SplitManifest& manifest);
DatasetSplit stratified_split(const FlowTable& table, SplitRatios ratios, std::uint64_t seed);

struct DatasetStats {
  std::size_t flows = 0;
  std::size_t hosts = 0;
  double anomaly_ratio = 0.0;
};

DatasetStats dataset_stats(const std::vector<FlowRecord>& records);
std::string format_stats(const DatasetStats& stats);

// JSON text formats for reproducible runs.
std::string scaler_to_json(const FeatureScaler& scaler);
FeatureScaler scaler_from_json(const std::string& text);

struct IngestManifest {
  std::string source;
  Schema schema = Schema::V2;
  ParseOptions options;
  SplitManifest split;
  std::vector<std::string> feature_names;
};

std::string manifest_to_json(const IngestManifest& m);
IngestManifest manifest_from_json(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace graphids
