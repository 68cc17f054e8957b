// graphids command-line front end: ingest, train, evaluate, score, ablate,
// synth, plot.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "graphids/ablations.hpp"
#include "graphids/checkpoint.hpp"
#include "graphids/detection.hpp"
#include "graphids/error.hpp"
#include "graphids/plot.hpp"
#include "graphids/synth_traffic.hpp"
#include "graphids/training.hpp"

namespace fs = std::filesystem;
using namespace graphids;

namespace {

// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 partial grid failure.
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;

void print_error(const std::string& command, const std::string& kind, const std::string& message) {
  const nlohmann::json msg = message;
  std::cerr << "graphids-error command=" << (command.empty() ? "-" : command) << " kind=" << kind
            << " message=" << msg.dump() << std::endl;
}

fs::path default_out(const std::string& command) {
  const char* env = std::getenv("GRAPHIDS_RUN_DIR");
  return fs::path(env != nullptr && *env != '\0' ? env : "runs") / command;
}

bool parse_on_off(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw Error("expected on|off, got '" + v + "'");
}

struct LoadedData {
  IngestManifest manifest;
  FlowTable table;
  DatasetSplit split;
};

// Re-reads the source CSV recorded by `ingest` and re-applies its split.
LoadedData load_data(const fs::path& data_dir, std::optional<bool> timestamps = std::nullopt) {
  LoadedData d;
  d.manifest = manifest_from_json(read_text_file(data_dir / "manifest.json"));
  ParseOptions options = d.manifest.options;
  if (timestamps) options.timestamps = *timestamps;
  fs::path source = d.manifest.source;
  if (source.is_relative()) source = data_dir / source;
  d.table = parse_csv(source, d.manifest.schema, options);
  if (d.table.records.size() != d.manifest.split.train.size() + d.manifest.split.val.size() +
                                     d.manifest.split.test.size() + d.manifest.split.discarded.size())
    throw Error("source " + source.string() + " no longer matches the split manifest");
  d.split = apply_split(d.table, d.manifest.split);
  if (!timestamps && fs::exists(data_dir / "scaler.json") &&
      scaler_from_json(read_text_file(data_dir / "scaler.json")) != d.split.scaler)
    throw Error("source " + source.string() + " changed since ingest (scaler differs)");
  return d;
}

std::string fingerprint_line(const TrainConfig& c) {
  return "config_fingerprint=" + config_fingerprint(c) + " seed=" + std::to_string(c.seed);
}

void apply_sets(TrainConfig& c, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + s + "'");
    c.set(s.substr(0, eq), s.substr(eq + 1));
  }
  c.validate();
}

// ---- commands -------------------------------------------------------------

struct IngestArgs {
  std::string input;
  std::string schema = "v2";
  std::string timestamps = "off";
  bool reduced = false;
  std::uint64_t split_seed = 0;
  std::string out;
};

int cmd_ingest(const IngestArgs& a) {
  ParseOptions options;
  options.timestamps = parse_on_off(a.timestamps);
  options.reduced_features = a.reduced;
  const Schema schema = parse_schema(a.schema);
  if (schema == Schema::V2 && options.timestamps)
    spdlog::warn("--timestamps on has no effect with the v2 schema (it has no timestamp columns)");
  const FlowTable table = parse_csv(a.input, schema, options);
  if (table.zero_filled_cells > 0)
    spdlog::warn("{} missing or non-numeric cells were zero-filled", table.zero_filled_cells);
  const DatasetSplit split = stratified_split(table, SplitRatios{}, a.split_seed);

  const fs::path out = a.out.empty() ? default_out("ingest") : fs::path(a.out);
  fs::create_directories(out);
  IngestManifest m;
  m.source = fs::absolute(a.input).lexically_normal().string();
  m.schema = schema;
  m.options = options;
  m.split = split.manifest;
  m.feature_names = table.feature_names;
  write_text_file(out / "manifest.json", manifest_to_json(m));
  write_text_file(out / "scaler.json", scaler_to_json(split.scaler));

  const std::string stats = format_stats(dataset_stats(table.records));
  write_text_file(out / "stats.txt", stats + "\n");
  std::cout << stats << "\n";
  std::cout << "features=" << table.feature_dim() << " train=" << split.train.size() << " val=" << split.val.size()
            << " test=" << split.test.size() << " discarded=" << split.manifest.discarded.size() << "\n";
  std::cout << "manifest=" << (out / "manifest.json").string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = load_config(a.config);
  apply_sets(cfg, a.sets);
  const LoadedData data = load_data(a.data);
  const fs::path out = a.out.empty() ? default_out("train") : fs::path(a.out);
  fs::create_directories(out);
  std::cout << fingerprint_line(cfg) << "\n";

  std::ofstream history(out / "history.csv");
  history << "epoch,train_loss,val_pr_auc,seconds\n";
  history.precision(17);
  TrainOptions options;
  options.on_epoch = [&](const EpochRecord& r) {
    history << r.epoch << ',' << r.train_loss << ',' << r.val_pr_auc << ',' << r.seconds << '\n';
    history.flush();
    spdlog::info("epoch {} train_loss={:.6g} val_pr_auc={:.4f} ({:.1f}s)", r.epoch, r.train_loss, r.val_pr_auc,
                 r.seconds);
  };
  const TrainResult result = train(cfg, data.split, options);
  save_checkpoint(out / "checkpoint.gck", result.best);
  write_text_file(out / "config.yaml", config_to_yaml(cfg));
  nlohmann::json run;
  run["fingerprint"] = config_fingerprint(cfg);
  run["seed"] = cfg.seed;
  run["data"] = fs::absolute(a.data).lexically_normal().string();
  run["best_epoch"] = result.best_epoch;
  run["epochs_run"] = result.history.size();
  run["early_stopped"] = result.early_stopped;
  run["selected_by_train_loss"] = result.selected_by_train_loss;
  write_text_file(out / "run.json", run.dump(2) + "\n");
  std::cout << "best_epoch=" << result.best_epoch << " val_pr_auc=" << std::fixed << std::setprecision(4)
            << result.best.val_pr_auc << "\n";
  std::cout << "checkpoint=" << (out / "checkpoint.gck").string() << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string config;
  bool force = false;
};

Checkpoint load_for_cli(const std::string& path, const std::string& config_path, bool force, int feature_dim) {
  LoadOptions lo;
  lo.force = force;
  lo.expected_feature_dim = feature_dim;
  TrainConfig expected;
  if (!config_path.empty()) {
    expected = load_config(config_path);
    lo.expected_config = &expected;
  }
  std::vector<std::string> warnings;
  Checkpoint c = load_checkpoint(path, lo, &warnings);
  for (const auto& w : warnings) spdlog::warn("{}", w);
  return c;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const LoadedData data = load_data(a.data);
  const Checkpoint ckpt =
      load_for_cli(a.checkpoint, a.config, a.force, static_cast<int>(data.split.scaler.dim()));
  if (ckpt.feature_names != data.split.feature_names)
    throw SchemaError("checkpoint feature columns differ from the data's feature columns");
  auto model = model_from_checkpoint(ckpt);
  std::cout << fingerprint_line(ckpt.config) << "\n";
  const EvalReport report = evaluate(*model, data.split, ckpt.config.seed);
  const fs::path out = a.out.empty() ? fs::path(a.checkpoint).parent_path() : fs::path(a.out);
  if (!out.empty()) fs::create_directories(out);
  write_text_file(out / "report.json", report_to_json(report));
  write_text_file(out / "pr_curve.csv", pr_curve_csv(report));
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "pr_auc=" << report.pr_auc << "\n";
  std::cout << "macro_f1=" << report.macro_f1 << "\n";
  std::cout << std::defaultfloat << std::setprecision(10) << "threshold=" << report.threshold
            << (report.threshold_degenerate ? " (degenerate)" : "") << "\n";
  std::cout << "report=" << (out / "report.json").string() << "\n";
  return 0;
}

struct ScoreArgs {
  std::string checkpoint;
  std::string flows;
  std::string schema = "v3";
  std::string out;
  bool force = false;
};

int cmd_score(const ScoreArgs& a) {
  // Parse every recognised column, then keep the checkpoint's feature set.
  ParseOptions options;
  options.reduced_features = true;
  options.timestamps = true;
  const FlowTable raw = parse_csv(a.flows, parse_schema(a.schema), options);
  const Checkpoint probe = load_for_cli(a.checkpoint, "", a.force, -1);
  const FlowTable table = select_features(raw, probe.feature_names);
  auto model = model_from_checkpoint(probe);
  const ScoredFlows scored = score_flows(*model, probe.scaler, table.records, probe.config.seed);
  if (a.out.empty()) {
    write_scores_csv(std::cout, scored);
  } else {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write " + a.out);
    write_scores_csv(out, scored);
    std::cout << "flows=" << scored.size() << " scores=" << a.out << "\n";
  }
  return 0;
}

struct AblateArgs {
  std::string grid;
  std::string data;
  std::string config;
  std::string out;
  int workers = 1;
};

int cmd_ablate(const AblateArgs& a) {
  const std::vector<AblationSpec> specs = load_grid(a.grid);
  const TrainConfig base = a.config.empty() ? TrainConfig{} : load_config(a.config);
  std::map<int, LoadedData> cache;  // -1 default, 0 timestamps off, 1 on
  for (const auto& s : specs) {
    const int key = s.timestamps ? static_cast<int>(*s.timestamps) : -1;
    if (cache.count(key) == 0) cache.emplace(key, load_data(a.data, s.timestamps));
  }
  const SplitProvider provider = [&cache](std::optional<bool> ts) -> const DatasetSplit& {
    return cache.at(ts ? static_cast<int>(*ts) : -1).split;
  };
  const auto outcomes = run_ablation_grid(specs, base, provider, a.workers);
  const fs::path out = a.out.empty() ? default_out("ablate") : fs::path(a.out);
  fs::create_directories(out);
  std::ostringstream csv;
  write_grid_csv(csv, outcomes);
  write_text_file(out / "grid.csv", csv.str());
  std::cout << csv.str();
  std::cout << "grid=" << (out / "grid.csv").string() << "\n";
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    if (o.status == "error") ++failed;
    if (o.status == "diverged") spdlog::warn("{}: training diverged: {}", o.spec.name, o.diagnostic);
  }
  if (failed > 0) {
    print_error("ablate", "PartialFailure", std::to_string(failed) + " of " + std::to_string(outcomes.size()) +
                                                " grid entries failed");
    return kExitPartial;
  }
  return 0;
}

struct SynthArgs {
  std::string spec;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const SynthSpec spec = load_synth_spec(a.spec);
  const SynthResult r = generate(spec);
  const fs::path out = a.out.empty() ? default_out("synth") / "flows.csv" : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_csv(out, r.table);
  std::cout << format_stats(dataset_stats(r.table.records)) << "\n";
  std::cout << "csv=" << out.string() << "\n";
  return 0;
}

struct PlotArgs {
  std::string report;
  std::string kind = "pr";
  std::string out;
};

int cmd_plot(const PlotArgs& a) {
  const EvalReport report = report_from_json(read_text_file(a.report));
  const PlotKind kind = parse_plot_kind(a.kind);
  fs::path stem = a.out;
  if (stem.empty())
    stem = fs::path(a.report).parent_path() / (kind == PlotKind::PrCurve ? "pr_curve" : "score_hist");
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  const fs::path svg = write_plot(report, kind, stem);
  std::cout << "plot=" << svg.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("graphids"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Graph-based network intrusion detection with a masked Transformer autoencoder"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse a NetFlow CSV, split it, and fit the feature scaler");
  c_ingest->add_option("--input", ingest.input, "NetFlow CSV file")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--schema", ingest.schema, "v2 or v3")->check(CLI::IsMember({"v2", "v3"}));
  c_ingest->add_option("--timestamps", ingest.timestamps, "Keep flow timestamps (v3)")
      ->check(CLI::IsMember({"on", "off"}));
  c_ingest->add_flag("--reduced-features", ingest.reduced, "Use whichever schema feature columns are present");
  c_ingest->add_option("--split-seed", ingest.split_seed, "Seed of the stratified split");
  c_ingest->add_option("--out", ingest.out, "Output directory");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model on an ingested dataset");
  c_train->add_option("--config", tr.config, "YAML config")->required()->check(CLI::ExistingFile);
  c_train->add_option("--data", tr.data, "Directory written by ingest")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--out", tr.out, "Run directory");
  c_train->add_option("--set", tr.sets, "Override a config key (key=value)");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Select the threshold on validation and report test metrics");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--data", ev.data, "Directory written by ingest")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--out", ev.out, "Report directory (default: next to the checkpoint)");
  c_eval->add_option("--config", ev.config, "Expected config; its fingerprint must match the checkpoint");
  c_eval->add_flag("--force", ev.force, "Proceed despite a config fingerprint mismatch");

  ScoreArgs sc;
  auto* c_score = app.add_subcommand("score", "Score flows with a trained checkpoint");
  c_score->add_option("--checkpoint", sc.checkpoint)->required()->check(CLI::ExistingFile);
  c_score->add_option("--flows", sc.flows, "NetFlow CSV file")->required()->check(CLI::ExistingFile);
  c_score->add_option("--schema", sc.schema, "v2 or v3")->check(CLI::IsMember({"v2", "v3"}));
  c_score->add_option("--out", sc.out, "Scores CSV (default: stdout)");
  c_score->add_flag("--force", sc.force);

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "Run an ablation grid");
  c_ablate->add_option("--grid", ab.grid, "Grid YAML")->required()->check(CLI::ExistingFile);
  c_ablate->add_option("--data", ab.data, "Directory written by ingest")->required()->check(CLI::ExistingDirectory);
  c_ablate->add_option("--config", ab.config, "Base config YAML")->check(CLI::ExistingFile);
  c_ablate->add_option("--out", ab.out, "Output directory");
  c_ablate->add_option("--workers", ab.workers, "Concurrent grid entries")->check(CLI::PositiveNumber);

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Generate a labeled synthetic NetFlow CSV");
  c_synth->add_option("--spec", sy.spec, "Generator spec YAML")->required()->check(CLI::ExistingFile);
  c_synth->add_option("--out", sy.out, "CSV path");

  PlotArgs pl;
  auto* c_plot = app.add_subcommand("plot", "Plot a PR curve or score distributions from a report");
  c_plot->add_option("--report", pl.report, "report.json from evaluate")->required()->check(CLI::ExistingFile);
  c_plot->add_option("--kind", pl.kind, "pr or score-hist")->check(CLI::IsMember({"pr", "score-hist"}));
  c_plot->add_option("--out", pl.out, "Output path stem (.svg and .csv are appended)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    print_error(subs.empty() ? "" : subs.front()->get_name(), "UsageError", e.what());
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "ingest") return cmd_ingest(ingest);
    if (command == "train") return cmd_train(tr);
    if (command == "evaluate") return cmd_evaluate(ev);
    if (command == "score") return cmd_score(sc);
    if (command == "ablate") return cmd_ablate(ab);
    if (command == "synth") return cmd_synth(sy);
    if (command == "plot") return cmd_plot(pl);
  } catch (const SchemaError& e) {
    print_error(command, "SchemaError", e.what());
  } catch (const ShapeError& e) {
    print_error(command, "ShapeError", e.what());
  } catch (const CheckpointError& e) {
    print_error(command, "CheckpointError", e.what());
  } catch (const DivergenceError& e) {
    print_error(command, "DivergenceError", e.what());
  } catch (const std::exception& e) {
    print_error(command, "Error", e.what());
  }
  return kExitFailure;
}
