#include "graphids/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "graphids/error.hpp"

namespace graphids {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'G', 'I', 'D', 'S', 'C', 'K', 'P', '1'};

void append_bytes(std::string& buf, const void* data, std::size_t n) {
  buf.append(static_cast<const char*>(data), n);
}

void append_u64(std::string& buf, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  append_bytes(buf, b, 8);
}

std::uint64_t read_u64(const std::string& buf, std::size_t at) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i)
    x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + static_cast<std::size_t>(i)])) << (8 * i);
  return x;
}

json shape_list(const std::vector<Mat>& mats) {
  json out = json::array();
  for (const auto& m : mats) out.push_back({m.rows(), m.cols()});
  return out;
}

}  // namespace

Checkpoint capture_checkpoint(const Model& model, const AdamW* optimizer, const FeatureScaler& scaler,
                              const std::vector<std::string>& feature_names, int epoch,
                              double val_pr_auc) {
  Checkpoint c;
  c.config = model.config();
  c.fingerprint = config_fingerprint(c.config);
  c.feature_names = feature_names;
  c.scaler = scaler;
  c.epoch = epoch;
  c.val_pr_auc = val_pr_auc;
  for (const auto& p : model.params()) {
    c.param_names.push_back(p.name);
    c.params.push_back(p.value);
  }
  if (optimizer != nullptr) {
    c.adam_m = optimizer->first_moments();
    c.adam_v = optimizer->second_moments();
    c.adam_steps = optimizer->steps();
  }
  return c;
}

void restore_parameters(Model& model, const Checkpoint& ckpt) {
  ParameterStore& store = model.params();
  if (store.size() != ckpt.params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                          " parameters, model has " + std::to_string(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    const Mat& v = ckpt.params[i];
    if (p.name != ckpt.param_names[i] || p.value.rows() != v.rows() || p.value.cols() != v.cols())
      throw CheckpointError("checkpoint parameter '" + ckpt.param_names[i] + "' does not match model parameter '" +
                            p.name + "'");
    p.value = v;
  }
}

void restore_optimizer(AdamW& optimizer, const Checkpoint& ckpt) {
  if (ckpt.adam_m.empty()) throw CheckpointError("checkpoint holds no optimizer state");
  if (ckpt.adam_m.size() != optimizer.first_moments().size())
    throw CheckpointError("optimizer state does not match the model");
  optimizer.first_moments() = ckpt.adam_m;
  optimizer.second_moments() = ckpt.adam_v;
  optimizer.set_steps(ckpt.adam_steps);
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model>(ckpt.config, ckpt.feature_dim());
  restore_parameters(*model, ckpt);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  json h;
  h["config"] = config_to_yaml(c.config);
  h["fingerprint"] = c.fingerprint;
  h["feature_names"] = c.feature_names;
  h["scaler"] = json::parse(scaler_to_json(c.scaler));
  h["epoch"] = c.epoch;
  h["val_pr_auc"] = std::isnan(c.val_pr_auc) ? json(nullptr) : json(c.val_pr_auc);
  h["param_names"] = c.param_names;
  h["param_shapes"] = shape_list(c.params);
  h["has_optimizer"] = !c.adam_m.empty();
  h["adam_steps"] = c.adam_steps;
  h["rng_states"] = c.rng_states;
  const std::string header = h.dump();

  std::string buf(kMagic, sizeof(kMagic));
  append_u64(buf, header.size());
  buf += header;
  auto dump = [&](const std::vector<Mat>& mats) {
    for (const auto& m : mats) append_bytes(buf, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  };
  dump(c.params);
  dump(c.adam_m);
  dump(c.adam_v);
  append_u64(buf, fnv1a64(buf.data(), buf.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const LoadOptions& options,
                           std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";
  if (buf.size() < sizeof(kMagic) + 16 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(where + "not a checkpoint file");
  const std::size_t body = buf.size() - 8;
  if (read_u64(buf, body) != fnv1a64(buf.data(), body))
    throw CheckpointError(where + "checksum mismatch (file is corrupt or truncated)");
  const std::uint64_t header_len = read_u64(buf, sizeof(kMagic));
  std::size_t at = sizeof(kMagic) + 8;
  if (header_len > body - at) throw CheckpointError(where + "header length out of range");

  Checkpoint c;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  bool has_optimizer = false;
  try {
    const json h = json::parse(buf.substr(at, header_len));
    c.config = parse_config(h.at("config").get<std::string>());
    c.fingerprint = h.at("fingerprint").get<std::string>();
    c.feature_names = h.at("feature_names").get<std::vector<std::string>>();
    c.scaler = scaler_from_json(h.at("scaler").dump());
    c.epoch = h.at("epoch").get<int>();
    c.val_pr_auc = h.at("val_pr_auc").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                 : h.at("val_pr_auc").get<double>();
    c.param_names = h.at("param_names").get<std::vector<std::string>>();
    for (const auto& s : h.at("param_shapes")) shapes.emplace_back(s[0].get<Eigen::Index>(), s[1].get<Eigen::Index>());
    has_optimizer = h.at("has_optimizer").get<bool>();
    c.adam_steps = h.at("adam_steps").get<std::int64_t>();
    c.rng_states = h.at("rng_states").get<std::vector<std::pair<std::string, std::string>>>();
  } catch (const json::exception& e) {
    throw CheckpointError(where + "malformed header: " + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(where + e.what());
  }
  at += header_len;
  if (shapes.size() != c.param_names.size()) throw CheckpointError(where + "parameter list mismatch");

  auto read_mats = [&](std::vector<Mat>& mats) {
    for (const auto& [r, k] : shapes) {
      Mat m(r, k);
      const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
      if (bytes > body - at) throw CheckpointError(where + "truncated tensor data");
      std::memcpy(m.data(), buf.data() + at, bytes);
      at += bytes;
      mats.push_back(std::move(m));
    }
  };
  read_mats(c.params);
  if (has_optimizer) {
    read_mats(c.adam_m);
    read_mats(c.adam_v);
  }
  if (at != body) throw CheckpointError(where + "unexpected trailing data");

  if (config_fingerprint(c.config) != c.fingerprint)
    throw CheckpointError(where + "stored fingerprint does not match its config");
  if (c.feature_names.size() != c.scaler.dim())
    throw CheckpointError(where + "feature names and scaler disagree");
  if (options.expected_feature_dim >= 0 && options.expected_feature_dim != c.feature_dim())
    throw CheckpointError(where + "feature dimension " + std::to_string(c.feature_dim()) +
                          " does not match the data (" + std::to_string(options.expected_feature_dim) + ")");
  if (options.expected_config != nullptr) {
    const std::string expected = config_fingerprint(*options.expected_config);
    if (expected != c.fingerprint) {
      const std::string msg = "config fingerprint mismatch: checkpoint " + c.fingerprint + ", expected " + expected;
      if (!options.force) throw CheckpointError(where + msg + " (use force to override)");
      if (warnings != nullptr) warnings->push_back(msg);
    }
  }
  return c;
}

}  // namespace graphids
