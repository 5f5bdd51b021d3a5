#include "dementia_r1/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dementia_r1/errors.hpp"
#include "dementia_r1/reward.hpp"
#include "dementia_r1/text.hpp"

namespace dr1 {

std::string_view arm_name(Arm arm) {
  switch (arm) {
    case Arm::GrpoGrpo: return "grpo_grpo";
    case Arm::GrpoStage2Only: return "grpo_stage2_only";
    case Arm::GrpoStage1Only: return "grpo_stage1_only";
  }
  return "";
}

std::optional<Arm> parse_arm(std::string_view name) {
  for (Arm arm : {Arm::GrpoGrpo, Arm::GrpoStage2Only, Arm::GrpoStage1Only})
    if (arm_name(arm) == name) return arm;
  return std::nullopt;
}

bool arm_needs_stage1(Arm arm) { return arm != Arm::GrpoStage2Only; }
bool arm_needs_stage2(Arm arm) { return arm != Arm::GrpoStage1Only; }

// ---------------------------------------------------------------------------
// Recipe

GRPOConfig default_stage_config() {
  GRPOConfig config;
  config.optimizer = OptimizerKind::Adam;
  config.learning_rate = 0.003;
  return config;
}

std::uint64_t Recipe::run_seed(std::size_t i) const { return derive_seed(seed, "run", i); }

void Recipe::validate() const {
  if (arms.empty()) throw ConfigError("recipe lists no arms");
  if (n_seeds == 0) throw ConfigError("recipe needs at least one seed");
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
  if (!(data.test_ratio >= 0.0 && data.test_ratio <= 1.0))
    throw ConfigError("data.test_ratio must lie in [0, 1]");
  cohort.validate();
  stage1.validate();
  stage2.validate();
}

namespace {

void put_grpo(KeyValueConfig& c, const std::string& prefix, const GRPOConfig& g) {
  c.set(prefix + ".steps", std::to_string(g.steps));
  c.set(prefix + ".lr", format_number(g.learning_rate));
  c.set(prefix + ".group_size", std::to_string(g.group_size));
  c.set(prefix + ".clip_epsilon", format_number(g.clip_epsilon));
  c.set(prefix + ".kl_coef", format_number(g.kl_coef));
  c.set(prefix + ".queries_per_step", std::to_string(g.queries_per_step));
  c.set(prefix + ".optimizer", std::string{optimizer_name(g.optimizer)});
}

GRPOConfig get_grpo(const KeyValueConfig& c, const std::string& prefix, GRPOConfig g) {
  g.steps = c.get_u64(prefix + ".steps", g.steps);
  g.learning_rate = c.get_double(prefix + ".lr", g.learning_rate);
  g.group_size = c.get_u64(prefix + ".group_size", g.group_size);
  g.clip_epsilon = c.get_double(prefix + ".clip_epsilon", g.clip_epsilon);
  g.kl_coef = c.get_double(prefix + ".kl_coef", g.kl_coef);
  g.queries_per_step = c.get_u64(prefix + ".queries_per_step", g.queries_per_step);
  const auto opt = c.get_string(prefix + ".optimizer", std::string{optimizer_name(g.optimizer)});
  const auto kind = parse_optimizer(opt);
  if (!kind) throw ConfigError(prefix + ".optimizer: unknown optimizer '" + opt + "'");
  g.optimizer = *kind;
  return g;
}

}  // namespace

KeyValueConfig Recipe::default_config() {
  const Recipe r;
  KeyValueConfig c;
  std::string arms;
  for (Arm arm : r.arms) arms += (arms.empty() ? "" : ",") + std::string{arm_name(arm)};
  c.set("arms", arms);
  c.set("seed", std::to_string(r.seed));
  c.set("seeds", std::to_string(r.n_seeds));
  c.set("cohort.n_patients", std::to_string(r.cohort.n_patients));
  c.set("cohort.profile", std::string{profile_name(r.cohort.profile)});
  c.set("cohort.min_gap_months", std::to_string(r.cohort.min_gap_months));
  c.set("cohort.max_gap_months", std::to_string(r.cohort.max_gap_months));
  c.set("cohort.min_visits", std::to_string(r.cohort.min_visits));
  c.set("cohort.max_visits", std::to_string(r.cohort.max_visits));
  c.set("cohort.max_initial_level", std::to_string(r.cohort.max_initial_level));
  c.set("cohort.max_drift", format_number(r.cohort.max_drift));
  c.set("cohort.fluctuation_prob", format_number(r.cohort.fluctuation_prob));
  c.set("cohort.noise_scale", format_number(r.cohort.noise_scale));
  c.set("data.test_ratio", format_number(r.data.test_ratio));
  c.set("data.max_len", std::to_string(r.data.max_len));
  c.set("data.stage2_cutoff_months", format_number(r.data.stage2.history_cutoff_months));
  c.set("data.stage2_min_gap_months", format_number(r.data.stage2.min_gap_months));
  c.set("data.stage1_test_limit", std::to_string(r.data.stage1_test_limit));
  put_grpo(c, "stage1", r.stage1);
  put_grpo(c, "stage2", r.stage2);
  c.set("model.hidden_width", std::to_string(r.hidden_width));
  c.set("model.init_scale", format_number(r.init_scale));
  c.set("eval.interval", std::to_string(r.eval_interval));
  return c;
}

const std::vector<std::string>& Recipe::known_keys() {
  static const std::vector<std::string> keys = [] {
    const auto defaults = default_config();
    std::vector<std::string> out;
    for (const auto& [k, v] : defaults.values()) out.push_back(k);
    return out;
  }();
  return keys;
}

Recipe Recipe::from_config(const KeyValueConfig& c) {
  c.require_known(known_keys());
  Recipe r;
  r.arms.clear();
  for (const auto& name : c.get_list("arms", {"grpo_grpo", "grpo_stage2_only"})) {
    const auto arm = parse_arm(name);
    if (!arm) throw ConfigError("unknown arm '" + name + "'");
    if (std::find(r.arms.begin(), r.arms.end(), *arm) == r.arms.end()) r.arms.push_back(*arm);
  }
  r.seed = c.get_u64("seed", r.seed);
  r.n_seeds = c.get_u64("seeds", r.n_seeds);

  auto& co = r.cohort;
  co.n_patients = c.get_u64("cohort.n_patients", co.n_patients);
  const auto profile_text = c.get_string("cohort.profile", "amc");
  const auto profile = parse_profile(profile_text);
  if (!profile) throw ConfigError("cohort.profile: unknown profile '" + profile_text + "'");
  co.profile = *profile;
  co.min_gap_months = static_cast<int>(c.get_i64("cohort.min_gap_months", co.min_gap_months));
  co.max_gap_months = static_cast<int>(c.get_i64("cohort.max_gap_months", co.max_gap_months));
  co.min_visits = static_cast<int>(c.get_i64("cohort.min_visits", co.min_visits));
  co.max_visits = static_cast<int>(c.get_i64("cohort.max_visits", co.max_visits));
  co.max_initial_level =
      static_cast<int>(c.get_i64("cohort.max_initial_level", co.max_initial_level));
  co.max_drift = c.get_double("cohort.max_drift", co.max_drift);
  co.fluctuation_prob = c.get_double("cohort.fluctuation_prob", co.fluctuation_prob);
  co.noise_scale = c.get_double("cohort.noise_scale", co.noise_scale);
  co.seed = derive_seed(r.seed, "cohort");

  r.data.test_ratio = c.get_double("data.test_ratio", r.data.test_ratio);
  r.data.max_len = c.get_u64("data.max_len", r.data.max_len);
  r.data.stage2.history_cutoff_months =
      c.get_double("data.stage2_cutoff_months", r.data.stage2.history_cutoff_months);
  r.data.stage2.min_gap_months =
      c.get_double("data.stage2_min_gap_months", r.data.stage2.min_gap_months);
  r.data.stage1_test_limit = c.get_u64("data.stage1_test_limit", r.data.stage1_test_limit);
  r.data.seed = derive_seed(r.seed, "data");

  r.stage1 = get_grpo(c, "stage1", r.stage1);
  r.stage2 = get_grpo(c, "stage2", r.stage2);
  r.hidden_width = c.get_u64("model.hidden_width", r.hidden_width);
  r.init_scale = c.get_double("model.init_scale", r.init_scale);
  r.eval_interval = c.get_u64("eval.interval", r.eval_interval);
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// Stages

PolicyParams initial_policy(const Recipe& recipe, Profile profile, std::uint64_t run_seed) {
  PolicyParams params = PolicyParams::standard(profile, recipe.hidden_width);
  Rng rng{derive_seed(run_seed, "init")};
  params.randomize(recipe.init_scale, rng);
  return params;
}

std::vector<TaskAccuracy> evaluate_index_tasks(const PolicyParams& params,
                                               std::span<const TrainingExample> examples) {
  const auto tolerances = ToleranceProfile::for_profile(params.profile());
  struct Acc {
    std::vector<double> preds, truths;
    double baseline = 0.0;
  };
  std::map<Task, Acc> by_task;
  for (const auto& ex : examples) {
    const Task& task = ex.sample.task;
    const auto& space = params.head(task).space;
    const auto dist = forward(params, task, ex.features);
    auto& acc = by_task[task];
    acc.preds.push_back(space.value(greedy_action(dist)));
    acc.truths.push_back(ex.sample.target);
    const double delta = tolerance_for(index_name(task.index()), tolerances);
    std::size_t window = 0;
    for (double a : space.actions()) window += static_cast<std::size_t>(r_cold(a, ex.sample.target, delta));
    acc.baseline += static_cast<double>(window) / static_cast<double>(space.size());
  }
  std::vector<TaskAccuracy> out;
  for (const auto& [task, acc] : by_task) {
    const double delta = tolerance_for(index_name(task.index()), tolerances);
    out.push_back({task, index_accuracy(acc.preds, acc.truths, delta),
                   100.0 * acc.baseline / static_cast<double>(acc.preds.size()), acc.preds.size()});
  }
  return out;
}

std::vector<int> predict_diagnosis(const PolicyParams& params,
                                   std::span<const TrainingExample> examples) {
  const auto& space = params.head(Task::diagnosis()).space;
  std::vector<int> preds;
  preds.reserve(examples.size());
  for (const auto& ex : examples)
    preds.push_back(static_cast<int>(space.value(greedy_action(forward(params, Task::diagnosis(), ex.features)))));
  return preds;
}

namespace {

void require_audit(const PreparedData& data) {
  if (!data.audit.passed()) throw LeakageError("leakage audit failed:\n" + data.audit.summary());
}

std::vector<int> labels_of(std::span<const TrainingExample> examples) {
  std::vector<int> labels;
  for (const auto& ex : examples) labels.push_back(static_cast<int>(ex.sample.target));
  return labels;
}

}  // namespace

Stage1Outcome run_stage1(const Recipe& recipe, const PreparedData& data, std::uint64_t run_seed) {
  require_audit(data);
  const auto layout = FeatureLayout::for_profile(data.profile);
  const auto train_set = make_examples(data.stage1_train(), layout);
  const auto test_set = make_examples(data.stage1_test(), layout);
  GRPOConfig config = recipe.stage1;
  config.seed = derive_seed(run_seed, "stage1");

  Stage1Outcome outcome{initial_policy(recipe, data.profile, run_seed), {}, {}, {}};
  auto hook = [&](std::size_t step, const PolicyParams& params) {
    if (test_set.empty()) return;
    double mean = 0.0;
    const auto accs = evaluate_index_tasks(params, test_set);
    for (const auto& a : accs) mean += a.accuracy;
    outcome.curve.push_back({step, mean / static_cast<double>(accs.size())});
  };
  if (config.steps > 0) {
    auto result = train(config, train_set, outcome.params,
                        cold_start_reward(ToleranceProfile::for_profile(data.profile)), hook,
                        recipe.eval_interval);
    outcome.params = std::move(result.params);
    outcome.history = std::move(result.history);
  } else {
    hook(0, outcome.params);
  }
  if (!test_set.empty()) outcome.test_accuracy = evaluate_index_tasks(outcome.params, test_set);
  return outcome;
}

Stage2Outcome run_stage2(const Recipe& recipe, const PreparedData& data, std::uint64_t run_seed,
                         const std::optional<PolicyParams>& init) {
  require_audit(data);
  const auto layout = FeatureLayout::for_profile(data.profile);
  const auto train_set = make_examples(data.stage2_train(), layout);
  const auto test_samples = data.stage2_test();
  const auto test_set = make_examples(test_samples, layout);
  const auto test_labels = labels_of(test_set);
  GRPOConfig config = recipe.stage2;
  config.seed = derive_seed(run_seed, "stage2");

  Stage2Outcome outcome{init ? *init : initial_policy(recipe, data.profile, run_seed), {}, {}, {}};
  auto hook = [&](std::size_t step, const PolicyParams& params) {
    if (test_set.empty()) return;
    const auto report = compute_metrics(predict_diagnosis(params, test_set), test_labels);
    outcome.f1_curve.push_back({step, report.f1});
  };
  if (config.steps > 0) {
    auto result = train(config, train_set, outcome.params, task_reward(), hook, recipe.eval_interval);
    outcome.params = std::move(result.params);
    outcome.history = std::move(result.history);
  } else {
    hook(0, outcome.params);
  }
  if (!test_set.empty())
    outcome.final_metrics = stratify_by_bucket(predict_diagnosis(outcome.params, test_set), test_samples);
  return outcome;
}

// ---------------------------------------------------------------------------
// Experiment

std::optional<std::size_t> steps_to_reach(std::span<const CurvePoint> curve, double threshold) {
  for (const auto& p : curve)
    if (p.value >= threshold) return p.step;
  return std::nullopt;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double AblationComparison::steps_ratio() const {
  return stage2_steps == 0 ? std::numeric_limits<double>::infinity()
                           : median_steps_to_reach / static_cast<double>(stage2_steps);
}

ExperimentResult run_experiment(const Recipe& recipe) {
  recipe.validate();
  const auto cohort = generate_cohort(recipe.cohort);
  return run_experiment(recipe, prepare_datasets(cohort, recipe.data));
}

ExperimentResult run_experiment(const Recipe& recipe, const PreparedData& data) {
  require_audit(data);
  ExperimentResult result;
  result.audit = data.audit;
  const auto layout = FeatureLayout::for_profile(data.profile);
  const auto test_samples = data.stage2_test();
  const auto test_set = make_examples(test_samples, layout);

  for (std::size_t i = 0; i < recipe.n_seeds; ++i) {
    const auto seed = recipe.run_seed(i);
    std::optional<Stage1Outcome> stage1;
    std::string stage1_error;
    for (Arm arm : recipe.arms) {
      ArmRun run{arm, i, seed, false, {}, {}, {}, {}};
      try {
        if (arm_needs_stage1(arm) && !stage1) {
          if (!stage1_error.empty()) throw std::runtime_error(stage1_error);
          try {
            stage1 = run_stage1(recipe, data, seed);
          } catch (const std::exception& e) {
            stage1_error = std::string{"stage 1: "} + e.what();
            throw std::runtime_error(stage1_error);
          }
        }
        if (arm_needs_stage1(arm)) run.stage1_accuracy = stage1->test_accuracy;
        if (arm_needs_stage2(arm)) {
          const std::optional<PolicyParams> init =
              arm_needs_stage1(arm) ? std::optional<PolicyParams>{stage1->params} : std::nullopt;
          auto outcome = run_stage2(recipe, data, seed, init);
          run.metrics = std::move(outcome.final_metrics);
          run.f1_curve = std::move(outcome.f1_curve);
        } else {
          run.metrics = stratify_by_bucket(predict_diagnosis(stage1->params, test_set), test_samples);
          run.f1_curve = {{0, run.metrics.f1}};
        }
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      result.runs.push_back(std::move(run));
    }
  }

  for (Arm arm : recipe.arms) {
    ArmSummary summary;
    summary.arm = arm;
    std::vector<MetricsReport> reports;
    std::vector<double> f1s;
    for (const auto& run : result.runs)
      if (run.arm == arm && run.ok) {
        reports.push_back(run.metrics);
        f1s.push_back(run.metrics.f1);
      }
    summary.succeeded = reports.size();
    if (!reports.empty()) {
      summary.aggregate = aggregate_seeds(reports);
      summary.median_final_f1 = median(f1s);
    }
    result.arms.push_back(std::move(summary));
  }

  const bool has_both =
      std::find(recipe.arms.begin(), recipe.arms.end(), Arm::GrpoGrpo) != recipe.arms.end() &&
      std::find(recipe.arms.begin(), recipe.arms.end(), Arm::GrpoStage2Only) != recipe.arms.end();
  if (has_both) {
    AblationComparison cmp;
    cmp.stage2_steps = recipe.stage2.steps;
    std::vector<double> with, without, steps;
    for (std::size_t i = 0; i < recipe.n_seeds; ++i) {
      const ArmRun* warm = nullptr;
      const ArmRun* cold = nullptr;
      for (const auto& run : result.runs) {
        if (run.seed_index != i || !run.ok) continue;
        if (run.arm == Arm::GrpoGrpo) warm = &run;
        if (run.arm == Arm::GrpoStage2Only) cold = &run;
      }
      if (!warm || !cold) continue;
      with.push_back(warm->metrics.f1);
      without.push_back(cold->metrics.f1);
      const auto reached = steps_to_reach(warm->f1_curve, cold->metrics.f1);
      cmp.steps_to_reach.push_back(reached);
      steps.push_back(reached ? static_cast<double>(*reached)
                              : std::numeric_limits<double>::infinity());
    }
    if (!with.empty()) {
      cmp.median_final_f1_with_stage1 = median(with);
      cmp.median_final_f1_without_stage1 = median(without);
      cmp.median_steps_to_reach = median(steps);
      result.ablation = std::move(cmp);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_experiment_reports(const std::filesystem::path& dir, const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::string, MetricsReport>> summary_rows;
  std::ostringstream summary_records;
  for (const auto& arm : result.arms) {
    const std::string name{arm_name(arm.arm)};
    std::vector<std::pair<std::string, MetricsReport>> rows;
    std::ostringstream records, curves;
    std::string failures;
    for (const auto& run : result.runs) {
      if (run.arm != arm.arm) continue;
      const std::string label = name + " seed#" + std::to_string(run.seed_index);
      if (!run.ok) {
        failures += label + " FAILED: " + run.error + "\n";
        continue;
      }
      rows.emplace_back(label, run.metrics);
      write_report_records(records, label, run.metrics);
      nlohmann::ordered_json curve;
      curve["method"] = label;
      curve["steps"] = nlohmann::json::array();
      curve["f1"] = nlohmann::json::array();
      for (const auto& p : run.f1_curve) {
        curve["steps"].push_back(p.step);
        curve["f1"].push_back(p.value);
      }
      curves << curve.dump() << '\n';
    }
    if (arm.succeeded > 0) {
      rows.emplace_back(name + " (mean ± std)", arm.aggregate);
      summary_rows.emplace_back(name, arm.aggregate);
      write_report_records(records, name, arm.aggregate);
      write_report_records(summary_records, name, arm.aggregate);
    }
    write_file(dir / (name + ".report.txt"), format_table(rows) + failures);
    write_file(dir / (name + ".records.jsonl"), records.str());
    write_file(dir / (name + ".curves.jsonl"), curves.str());
  }

  std::string summary = format_table(summary_rows);
  if (result.ablation) {
    const auto& a = *result.ablation;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "\nmedian final F1 with Stage 1: %.2f\nmedian final F1 without Stage 1: %.2f\n"
                  "median Stage-2 steps to reach the cold-start final F1: %.0f of %zu (ratio %.3f)\n",
                  a.median_final_f1_with_stage1, a.median_final_f1_without_stage1,
                  a.median_steps_to_reach, a.stage2_steps, a.steps_ratio());
    summary += buf;
    nlohmann::ordered_json j;
    j["method"] = "ablation";
    j["median_final_f1_with_stage1"] = a.median_final_f1_with_stage1;
    j["median_final_f1_without_stage1"] = a.median_final_f1_without_stage1;
    j["median_steps_to_reach"] =
        std::isfinite(a.median_steps_to_reach) ? nlohmann::json(a.median_steps_to_reach) : nlohmann::json(nullptr);
    j["stage2_steps"] = a.stage2_steps;
    summary_records << j.dump() << '\n';
  }
  write_file(dir / "summary.txt", summary);
  write_file(dir / "summary.jsonl", summary_records.str());
}

}  // namespace dr1
