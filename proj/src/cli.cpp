#include "dementia_r1/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dementia_r1/config.hpp"
#include "dementia_r1/errors.hpp"
#include "dementia_r1/pipeline.hpp"
#include "dementia_r1/text.hpp"

namespace fs = std::filesystem;

namespace dr1 {
namespace {

// Keys a command accepts from defaults, files, environment, and --set.
std::vector<std::string> keys_with_prefix(std::initializer_list<std::string_view> prefixes,
                                          std::initializer_list<std::string_view> exact) {
  std::vector<std::string> keys;
  for (const auto& key : Recipe::known_keys()) {
    bool keep = false;
    for (auto p : prefixes) keep = keep || key.starts_with(p);
    for (auto e : exact) keep = keep || key == e;
    if (keep) keys.push_back(key);
  }
  return keys;
}

struct Layers {
  std::string config_file;
  std::vector<std::string> sets;
  KeyValueConfig flags;
};

KeyValueConfig resolve(const std::vector<std::string>& keys, const Layers& layers) {
  const auto defaults = Recipe::default_config();
  KeyValueConfig resolved;
  for (const auto& key : keys)
    if (auto v = defaults.get(key)) resolved.set(key, *v);

  if (!layers.config_file.empty()) {
    std::ifstream in(layers.config_file);
    if (!in) throw IoError("cannot open config file " + layers.config_file);
    KeyValueConfig file;
    try {
      file = KeyValueConfig::parse(in);
    } catch (const ParseError& e) {
      throw ConfigError(layers.config_file + ": " + e.what());
    }
    file.require_known(keys);
    resolved.merge(file);
  }
  resolved.merge(env_overrides(keys));

  KeyValueConfig flags = layers.flags;
  for (const auto& item : layers.sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + item + "'");
    flags.set(std::string{trim(item.substr(0, eq))}, std::string{trim(item.substr(eq + 1))});
  }
  std::vector<std::string> flag_keys = keys;
  for (const auto& [k, v] : layers.flags.values()) flag_keys.push_back(k);
  flags.require_known(flag_keys);
  resolved.merge(flags);
  return resolved;
}

// Drops command bookkeeping keys such as input paths.
Recipe recipe_from(const KeyValueConfig& config) {
  KeyValueConfig recipe_keys;
  for (const auto& key : Recipe::known_keys())
    if (auto v = config.get(key)) recipe_keys.set(key, *v);
  return Recipe::from_config(recipe_keys);
}

void add_common(CLI::App* cmd, Layers& layers) {
  cmd->add_option("--config", layers.config_file, "Key-value configuration file");
  cmd->add_option("--set", layers.sets, "Override one key, e.g. --set stage2.lr=0.05");
}

// Stores a flag's text under a configuration key.
void add_keyed(CLI::App* cmd, const std::string& flag, const std::string& key, Layers& layers,
               const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&layers, key](const std::string& v) { layers.flags.set(key, v); }, help);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path make_run_dir(const std::string& out_dir, const std::string& run_dir,
                      const KeyValueConfig& config) {
  fs::path dir;
  if (!run_dir.empty()) {
    dir = run_dir;
  } else {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
    dir = fs::path(out_dir) / (std::string{stamp} + "-" + hex64(config.hash()));
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------

struct GenCohortArgs {
  Layers layers;
  std::string out;
};

int cmd_gen_cohort(const GenCohortArgs& args, std::ostream& out) {
  const auto keys = keys_with_prefix({"cohort."}, {"seed"});
  const auto config = resolve(keys, args.layers);
  const auto recipe = recipe_from(config);
  const auto cohort = generate_cohort(recipe.cohort);
  {
    auto file = open_out(args.out);
    write_cohort(file, cohort);
    if (!file) throw IoError("failed writing " + args.out);
  }
  write_text(args.out + ".config", config.echo());
  out << "wrote " << cohort.patients.size() << " patients to " << args.out << '\n';
  return kExitOk;
}

struct BuildArgs {
  Layers layers;
  std::string cohort;
  std::string out_dir = "runs";
  std::string run_dir;
};

std::string data_summary(const PreparedData& data, std::size_t n_patients) {
  std::ostringstream s;
  s << "patients: " << n_patients << '\n'
    << "stage1 samples: " << data.stage1_samples.size()
    << " (removed by length: " << data.stage1_removed_by_length
    << ", removed as stage2-test patients: " << data.stage1_removed_holdout << ")\n"
    << "stage1 train/test samples: " << data.stage1.train_samples.size() << " / "
    << data.stage1.test_samples.size() << '\n'
    << "stage2 samples: " << data.stage2_samples.size()
    << " (removed by length: " << data.stage2_removed_by_length << ")\n"
    << "stage2 train/test samples: " << data.stage2.train_samples.size() << " / "
    << data.stage2.test_samples.size() << '\n';
  if (const auto& b = data.stage2.balancing) {
    s << "stage2 balancing: " << b->positives_before << "+/" << b->negatives_before << "- -> "
      << b->positives_after << "+/" << b->negatives_after << "-\n";
  }
  s << data.audit.summary();
  return s.str();
}

int cmd_build_samples(BuildArgs args, std::ostream& out) {
  args.layers.flags.set("input.cohort", args.cohort);
  const auto keys = keys_with_prefix({"data."}, {"cohort.profile", "seed"});
  const auto config = resolve(keys, args.layers);
  const auto recipe = recipe_from(config);

  Cohort cohort;
  {
    auto in = open_in(args.cohort);
    cohort = read_cohort(in, recipe.cohort.profile);
  }
  const auto dir = make_run_dir(args.out_dir, args.run_dir, config);
  const auto data = prepare_datasets(cohort, recipe.data);

  const auto write_json_lines = [&](const std::string& name, const auto& writer) {
    auto file = open_out(dir / name);
    writer(file);
    if (!file) throw IoError("failed writing " + (dir / name).string());
  };
  write_json_lines("stage1_samples.jsonl", [&](std::ostream& o) { write_samples(o, data.stage1_samples); });
  write_json_lines("stage2_samples.jsonl", [&](std::ostream& o) { write_samples(o, data.stage2_samples); });
  write_json_lines("stage1_manifest.json", [&](std::ostream& o) { write_manifest(o, data.stage1); });
  write_json_lines("stage2_manifest.json", [&](std::ostream& o) { write_manifest(o, data.stage2); });
  write_json_lines("audit.json", [&](std::ostream& o) { write_audit(o, data.audit); });
  const auto summary = data_summary(data, cohort.patients.size());
  write_text(dir / "summary.txt", summary);
  write_text(dir / "config.txt", config.echo());

  out << "run directory: " << dir.string() << '\n' << summary;
  return data.audit.passed() ? kExitOk : kExitAudit;
}

struct TrainArgs {
  Layers layers;
  int stage = 0;
  std::string data;
  std::string init;
  std::string steps;
  std::string lr;
  std::string out_dir = "runs";
  std::string run_dir;
};

PreparedData load_prepared(const fs::path& dir, Profile profile) {
  PreparedData data;
  data.profile = profile;
  {
    auto in = open_in(dir / "stage1_samples.jsonl");
    data.stage1_samples = read_samples(in);
  }
  {
    auto in = open_in(dir / "stage2_samples.jsonl");
    data.stage2_samples = read_samples(in);
  }
  {
    auto in = open_in(dir / "stage1_manifest.json");
    data.stage1 = read_manifest(in);
  }
  {
    auto in = open_in(dir / "stage2_manifest.json");
    data.stage2 = read_manifest(in);
  }
  std::vector<LongitudinalSample> all = data.stage1_samples;
  all.insert(all.end(), data.stage2_samples.begin(), data.stage2_samples.end());
  data.audit = audit_leakage(data.stage1, data.stage2, all);
  return data;
}

std::string accuracy_table(std::span<const TaskAccuracy> rows) {
  std::ostringstream s;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %10s %10s %8s\n", "task", "accuracy", "random", "n");
  s << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-16s %10.2f %10.2f %8zu\n", r.task.name().c_str(),
                  r.accuracy, r.random_baseline, r.n_samples);
    s << line;
  }
  return s.str();
}

int cmd_train(TrainArgs args, std::ostream& out) {
  const std::string stage = "stage" + std::to_string(args.stage);
  args.layers.flags.set("train.stage", std::to_string(args.stage));
  args.layers.flags.set("input.data", args.data);
  if (!args.init.empty()) args.layers.flags.set("input.init", args.init);
  if (!args.steps.empty()) args.layers.flags.set(stage + ".steps", args.steps);
  if (!args.lr.empty()) args.layers.flags.set(stage + ".lr", args.lr);
  const auto keys = keys_with_prefix({"stage1.", "stage2.", "model.", "eval."}, {"seed"});
  const auto config = resolve(keys, args.layers);
  Recipe recipe = recipe_from(config);

  KeyValueConfig data_config;
  {
    auto in = open_in(fs::path(args.data) / "config.txt");
    data_config = KeyValueConfig::parse(in);
  }
  const auto profile_text = data_config.get_string("cohort.profile", "");
  const auto profile = parse_profile(profile_text);
  if (!profile) throw ParseError(args.data + "/config.txt: missing or unknown cohort.profile");
  recipe.cohort.profile = *profile;

  const auto data = load_prepared(args.data, *profile);
  const auto dir = make_run_dir(args.out_dir, args.run_dir, config);
  if (!data.audit.passed()) {
    auto file = open_out(dir / "audit.json");
    write_audit(file, data.audit);
    throw LeakageError("leakage audit failed:\n" + data.audit.summary());
  }

  std::optional<PolicyParams> init;
  if (!args.init.empty()) {
    auto in = open_in(args.init);
    init = read_checkpoint(in);
    if (init->profile() != *profile)
      throw ConfigError("checkpoint profile does not match the sample profile");
  }

  const auto seed = recipe.run_seed(0);
  PolicyParams params = init ? *init : initial_policy(recipe, *profile, seed);
  std::vector<StepRecord> history;
  std::vector<CurvePoint> curve;
  std::string report;
  std::ostringstream records;
  if (args.stage == 1) {
    if (init) throw ConfigError("--init is only accepted for stage 2");
    auto outcome = run_stage1(recipe, data, seed);
    params = std::move(outcome.params);
    history = std::move(outcome.history);
    curve = std::move(outcome.curve);
    report = accuracy_table(outcome.test_accuracy);
    for (const auto& a : outcome.test_accuracy) {
      nlohmann::ordered_json j;
      j["task"] = a.task.name();
      j["accuracy"] = a.accuracy;
      j["random_baseline"] = a.random_baseline;
      j["n_samples"] = a.n_samples;
      records << j.dump() << '\n';
    }
  } else {
    auto outcome = run_stage2(recipe, data, seed, init);
    params = std::move(outcome.params);
    history = std::move(outcome.history);
    curve = std::move(outcome.f1_curve);
    const std::vector<std::pair<std::string, MetricsReport>> rows{{stage, outcome.final_metrics}};
    report = format_table(rows);
    write_report_records(records, stage, outcome.final_metrics);
  }

  {
    auto file = open_out(dir / "policy.ckpt");
    write_checkpoint(file, params);
    if (!file) throw IoError("failed writing checkpoint");
  }
  {
    auto file = open_out(dir / "history.jsonl");
    write_history(file, history);
  }
  std::ostringstream curve_text;
  for (const auto& p : curve) {
    nlohmann::ordered_json j;
    j["step"] = p.step;
    j[args.stage == 1 ? "mean_accuracy" : "f1"] = p.value;
    curve_text << j.dump() << '\n';
  }
  write_text(dir / "curve.jsonl", curve_text.str());
  write_text(dir / "report.txt", report);
  write_text(dir / "report.jsonl", records.str());
  write_text(dir / "config.txt", config.echo());
  out << "run directory: " << dir.string() << '\n' << report;
  return kExitOk;
}

struct ExperimentArgs {
  Layers layers;
  std::string out_dir = "runs";
  std::string run_dir;
};

int cmd_experiment(const ExperimentArgs& args, std::ostream& out, std::ostream& err) {
  const auto config = resolve(Recipe::known_keys(), args.layers);
  const auto recipe = recipe_from(config);
  const auto result = run_experiment(recipe);
  const auto dir = make_run_dir(args.out_dir, args.run_dir, config);
  write_experiment_reports(dir, result);
  {
    auto file = open_out(dir / "audit.json");
    write_audit(file, result.audit);
  }
  write_text(dir / "config.txt", config.echo());

  std::size_t ok = 0;
  for (const auto& run : result.runs) {
    if (run.ok) {
      ++ok;
    } else {
      err << arm_name(run.arm) << " seed#" << run.seed_index << " failed: " << run.error << '\n';
    }
  }
  std::ifstream summary(dir / "summary.txt");
  out << "run directory: " << dir.string() << '\n' << summary.rdbuf();
  return ok > 0 ? kExitOk : kExitAllFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage GRPO pipeline for dementia trajectory prediction", "dementia-r1"};
  app.require_subcommand(1);

  GenCohortArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-cohort", "Generate a synthetic longitudinal cohort");
  add_common(gen_cmd, gen.layers);
  add_keyed(gen_cmd, "--n", "cohort.n_patients", gen.layers, "Number of patients");
  add_keyed(gen_cmd, "--profile", "cohort.profile", gen.layers, "amc or adni");
  add_keyed(gen_cmd, "--seed", "seed", gen.layers, "Base seed");
  gen_cmd->add_option("--out", gen.out, "Output cohort file")->required();

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build-samples", "Build, split, and audit Stage-1/2 samples");
  add_common(build_cmd, build.layers);
  build_cmd->add_option("--cohort", build.cohort, "Cohort file")->required();
  add_keyed(build_cmd, "--profile", "cohort.profile", build.layers, "amc or adni");
  add_keyed(build_cmd, "--max-len", "data.max_len", build.layers, "Maximum prompt length in tokens");
  add_keyed(build_cmd, "--test-ratio", "data.test_ratio", build.layers, "Test fraction of patients");
  add_keyed(build_cmd, "--seed", "seed", build.layers, "Base seed");
  build_cmd->add_option("--out-dir", build.out_dir, "Parent of the timestamped run directory");
  build_cmd->add_option("--run-dir", build.run_dir, "Exact output directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Run one GRPO stage");
  add_common(train_cmd, tr.layers);
  train_cmd->add_option("--stage", tr.stage, "1 (index forecasting) or 2 (diagnosis)")
      ->required()
      ->check(CLI::IsMember({1, 2}));
  train_cmd->add_option("--data", tr.data, "build-samples output directory")->required();
  train_cmd->add_option("--init", tr.init, "Checkpoint to warm-start Stage 2 from");
  train_cmd->add_option("--steps", tr.steps, "GRPO steps");
  train_cmd->add_option("--lr", tr.lr, "Learning rate");
  add_keyed(train_cmd, "--seed", "seed", tr.layers, "Base seed");
  train_cmd->add_option("--out-dir", tr.out_dir, "Parent of the timestamped run directory");
  train_cmd->add_option("--run-dir", tr.run_dir, "Exact output directory");

  ExperimentArgs ex;
  auto* ex_cmd = app.add_subcommand("experiment", "Run every arm over every seed");
  ex_cmd->add_option("--recipe,--config", ex.layers.config_file, "Recipe file");
  ex_cmd->add_option("--set", ex.layers.sets, "Override one key, e.g. --set stage2.lr=0.05");
  add_keyed(ex_cmd, "--seeds", "seeds", ex.layers, "Number of training seeds");
  add_keyed(ex_cmd, "--seed", "seed", ex.layers, "Base seed");
  add_keyed(ex_cmd, "--arms", "arms", ex.layers, "Comma-separated arm names");
  ex_cmd->add_option("--out-dir", ex.out_dir, "Parent of the timestamped run directory");
  ex_cmd->add_option("--run-dir", ex.run_dir, "Exact output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_cohort(gen, out);
    if (*build_cmd) return cmd_build_samples(build, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*ex_cmd) return cmd_experiment(ex, out, err);
  } catch (const LeakageError& e) {
    err << "leakage: " << e.what() << '\n';
    return kExitAudit;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BalancingError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace dr1
