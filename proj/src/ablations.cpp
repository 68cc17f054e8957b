#include "graphids/ablations.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <thread>

#include <yaml-cpp/yaml.h>

#include "graphids/error.hpp"

namespace graphids {

EvalReport run_variant(const TrainConfig& config, const DatasetSplit& split, const TrainOptions& options) {
  TrainResult trained = train(config, split, options);
  return evaluate(*trained.model, split, config.seed);
}

EvalReport run_t_mae(TrainConfig config, const DatasetSplit& split, const TrainOptions& options) {
  config.variant = Variant::TMae;
  return run_variant(config, split, options);
}

EvalReport run_simple_ae(TrainConfig config, const DatasetSplit& split, const TrainOptions& options) {
  config.variant = Variant::SimpleAe;
  return run_variant(config, split, options);
}

TrainConfig t_mae_high_lr(TrainConfig config) {
  config.variant = Variant::TMae;
  config.learning_rate = std::min(0.5, config.learning_rate * 10.0);
  return config;
}

TrainConfig AblationSpec::apply(TrainConfig base) const {
  base.variant = variant;
  for (const auto& [k, v] : overrides) {
    if (k == "variant") throw Error("ablation '" + name + "': set the variant field, not an override");
    base.set(k, v);
  }
  base.validate();
  return base;
}

std::string AblationSpec::overrides_text() const {
  std::string out;
  for (const auto& [k, v] : overrides) out += (out.empty() ? "" : ";") + k + "=" + v;
  if (timestamps) out += std::string(out.empty() ? "" : ";") + "timestamps=" + (*timestamps ? "on" : "off");
  return out;
}

std::vector<AblationSpec> mask_ratio_grid() {
  std::vector<AblationSpec> out;
  for (const char* r : {"0", "0.15", "0.3", "0.5", "0.7"})
    out.push_back({std::string("mask_ratio_") + r, Variant::GraphIds, {{"mask_ratio", r}}, std::nullopt});
  return out;
}

std::vector<AblationSpec> hop_grid() {
  std::vector<AblationSpec> out;
  for (const char* h : {"1", "2", "3"})
    out.push_back({std::string("hops_") + h, Variant::GraphIds, {{"nhops", h}}, std::nullopt});
  return out;
}

namespace {

AblationOutcome run_one(const AblationSpec& spec, const TrainConfig& base, const SplitProvider& splits) {
  AblationOutcome o;
  o.spec = spec;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const TrainConfig cfg = spec.apply(base);
    o.fingerprint = config_fingerprint(cfg);
    const DatasetSplit& split = splits(spec.timestamps);
    EvalReport report = run_variant(cfg, split);
    o.pr_auc = report.pr_auc;
    o.macro_f1 = report.macro_f1;
    o.report = std::move(report);
    o.status = "ok";
  } catch (const DivergenceError& e) {
    o.status = "diverged";
    o.diagnostic = e.what();
  } catch (const std::exception& e) {
    o.status = "error";
    o.diagnostic = e.what();
  }
  o.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return o;
}

}  // namespace

std::vector<AblationOutcome> run_ablation_grid(const std::vector<AblationSpec>& specs, const TrainConfig& base,
                                               const SplitProvider& splits, int workers) {
  std::vector<AblationOutcome> out(specs.size());
  if (specs.empty()) return out;
  const std::size_t n_workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), 1, specs.size());
  if (n_workers == 1) {
    for (std::size_t i = 0; i < specs.size(); ++i) out[i] = run_one(specs[i], base, splits);
    return out;
  }
  // The provider may build splits lazily, so resolve them before fanning out.
  for (const auto& s : specs) {
    try {
      splits(s.timestamps);
    } catch (const std::exception&) {
      // reported per entry by run_one
    }
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < specs.size(); i = next++) out[i] = run_one(specs[i], base, splits);
    });
  for (auto& t : pool) t.join();
  return out;
}

std::vector<AblationOutcome> run_ablation_grid(const std::vector<AblationSpec>& specs, const TrainConfig& base,
                                               const DatasetSplit& split, int workers) {
  const SplitProvider provider = [&split](std::optional<bool> timestamps) -> const DatasetSplit& {
    if (timestamps) throw Error("timestamps overrides need a grid run from raw CSV input");
    return split;
  };
  return run_ablation_grid(specs, base, provider, workers);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

void write_grid_csv(std::ostream& out, const std::vector<AblationOutcome>& outcomes) {
  out << "name,variant,overrides,fingerprint,status,pr_auc,macro_f1,runtime_s,diagnostic\n";
  char buf[64];
  for (const auto& o : outcomes) {
    out << csv_field(o.spec.name) << ',' << variant_name(o.spec.variant) << ',' << csv_field(o.spec.overrides_text())
        << ',' << o.fingerprint << ',' << o.status << ',';
    if (o.status == "ok") {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f", o.pr_auc, o.macro_f1);
      out << buf;
    } else {
      out << ',';
    }
    std::snprintf(buf, sizeof(buf), "%.3f", o.runtime_s);
    out << ',' << buf << ',' << csv_field(o.diagnostic) << '\n';
  }
}

std::vector<AblationSpec> parse_grid(const std::string& yaml_text) {
  std::vector<AblationSpec> specs;
  try {
    const YAML::Node root = YAML::Load(yaml_text);
    if (root.IsNull()) return specs;
    if (!root.IsMap()) throw Error("grid: top level must be a mapping");
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      if (key != "presets" && key != "entries") throw Error("grid: unknown key '" + key + "'");
    }
    if (const auto presets = root["presets"]) {
      for (const auto& p : presets) {
        const auto name = p.as<std::string>();
        std::vector<AblationSpec> g;
        if (name == "mask_ratio") g = mask_ratio_grid();
        else if (name == "hops") g = hop_grid();
        else throw Error("grid: unknown preset '" + name + "' (expected mask_ratio|hops)");
        specs.insert(specs.end(), g.begin(), g.end());
      }
    }
    if (const auto entries = root["entries"]) {
      for (const auto& e : entries) {
        AblationSpec s;
        s.name = e["name"] ? e["name"].as<std::string>() : "entry_" + std::to_string(specs.size());
        if (e["variant"]) s.variant = parse_variant(e["variant"].as<std::string>());
        if (const auto ov = e["overrides"])
          for (const auto& kv : ov) s.overrides.emplace_back(kv.first.as<std::string>(), kv.second.as<std::string>());
        TrainConfig probe;
        for (const auto& [key, value] : s.overrides) probe.set(key, value);  // rejects unknown keys early
        if (e["timestamps"]) {
          const auto t = e["timestamps"].as<std::string>();
          if (t != "on" && t != "off" && t != "true" && t != "false")
            throw Error("grid: timestamps must be on or off");
          s.timestamps = t == "on" || t == "true";
        }
        specs.push_back(std::move(s));
      }
    }
  } catch (const YAML::Exception& e) {
    throw Error(std::string("grid: malformed YAML: ") + e.what());
  }
  return specs;
}

std::vector<AblationSpec> load_grid(const std::filesystem::path& path) { return parse_grid(read_text_file(path)); }

}  // namespace graphids
