// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dementia_r1/cli.hpp"
#include "dementia_r1/grpo.hpp"
#include "dementia_r1/metrics.hpp"
#include "dementia_r1/pipeline.hpp"
#include "support.hpp"

using namespace dr1;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kFdStep = 1e-5;
constexpr double kFdRelTol = 1e-4;
constexpr std::size_t kFdStates = 120;
constexpr double kFdBudgetSec = 30;
constexpr double kAdvTol = 1e-9;
constexpr double kAdvBudgetSec = 5;
constexpr double kRewardBudgetSec = 1;
constexpr std::size_t kAuditConfigs = 20;
constexpr double kAuditBudgetSec = 60;
constexpr double kF1AmcTol = 0.01;
constexpr double kF1AdniTol = 0.05;
constexpr double kMetricBudgetSec = 1;
constexpr double kAblationStepsRatio = 0.5;
constexpr double kAblationBudgetSec = 600;
constexpr double kSanityFactor = 2.0;
constexpr double kSanityBudgetSec = 300;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

bool report(int id, const std::string& name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string{"exception: "} + e.what()};
  }
  std::printf("%s  %d. %s: %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str());
  std::fflush(stdout);
  return v.pass;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

// 1 ------------------------------------------------------------------------

Verdict gradient_oracle() {
  const auto start = Clock::now();
  Rng rng{20240601};
  double worst_logp = 0.0, worst_surrogate = 0.0;
  for (std::size_t k = 0; k < kFdStates; ++k) {
    const Profile profile = k % 2 == 0 ? Profile::Amc : Profile::Adni;
    const std::size_t hidden = k % 3 == 0 ? 0 : 4 + k % 5;
    auto params = PolicyParams::standard(profile, hidden);
    params.randomize(0.3 + 0.7 * uniform01(rng), rng);
    for (auto& h : params.heads)
      for (Eigen::Index i = 0; i < h.bias.size(); ++i) h.bias[i] = standard_normal(rng) * 0.5;
    const auto& head = params.heads[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(params.heads.size()) - 1))];
    const Task task = head.space.task();
    const FeatureVector x = testing::random_features(params.feature_dim(), rng);
    const auto action = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(head.space.size()) - 1));

    const auto analytic = grad_log_prob(params, task, x, action).flatten();
    const auto numeric = testing::numeric_gradient(
        params, [&](const PolicyParams& p) { return forward(p, task, x).log_probs[action]; }, kFdStep);
    worst_logp = std::max(worst_logp, testing::relative_error(analytic, numeric));

    auto reference = params;
    reference.randomize(0.5, rng);
    RolloutGroup g;
    g.task = task;
    g.features = x;
    for (const auto& s : sample_group(params, task, x, 8, rng)) {
      g.actions.push_back(s.action_index);
      // Perturb the old policy so both clip branches occur.
      g.old_log_probs.push_back(s.log_prob + 0.4 * standard_normal(rng));
      g.rewards.push_back(uniform01(rng));
    }
    g.advantages = compute_advantages(g.rewards);
    GRPOConfig cfg;
    cfg.kl_coef = 0.01 + 0.1 * uniform01(rng);
    const auto sa = surrogate_objective(params, g, reference, cfg).gradient.flatten();
    const auto sn = testing::numeric_gradient(
        params, [&](const PolicyParams& p) { return surrogate_objective(p, g, reference, cfg).value; },
        kFdStep);
    worst_surrogate = std::max(worst_surrogate, testing::relative_error(sa, sn));
  }
  const double t = seconds_since(start);
  const bool pass = worst_logp <= kFdRelTol && worst_surrogate <= kFdRelTol && t < kFdBudgetSec;
  return {pass, fmt("%.0f states, max rel err log_prob %.2e, surrogate %.2e (tol 1e-4), %.1fs",
                    static_cast<double>(kFdStates), worst_logp, worst_surrogate, t)};
}

// 2 ------------------------------------------------------------------------

Verdict advantage_suite() {
  const auto start = Clock::now();
  Rng rng{7};
  double worst_mean = 0.0, worst_std = 0.0, worst_const = 0.0, worst_affine = 0.0;
  for (std::size_t n = 2; n <= 64; ++n) {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> r(n);
      const bool binary = trial % 2 == 0;
      for (auto& x : r) x = binary ? static_cast<double>(uniform_int(rng, 0, 1)) : standard_normal(rng);
      if (binary) {
        r[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1))] = 0;
        r[0] = 1 - r[1];
      }
      const auto a = compute_advantages(r);
      double mean = 0.0;
      for (double v : a) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : a) var += (v - mean) * (v - mean);
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_std = std::max(worst_std, std::abs(std::sqrt(var / static_cast<double>(n)) - 1.0));

      const double scale = 0.01 + 100.0 * uniform01(rng);
      const double shift = 50.0 * standard_normal(rng);
      std::vector<double> moved(n);
      for (std::size_t i = 0; i < n; ++i) moved[i] = scale * r[i] + shift;
      const auto b = compute_advantages(moved);
      for (std::size_t i = 0; i < n; ++i) worst_affine = std::max(worst_affine, std::abs(a[i] - b[i]));

      const std::vector<double> constant(n, standard_normal(rng));
      for (double v : compute_advantages(constant)) worst_const = std::max(worst_const, std::abs(v));
    }
  }
  const double t = seconds_since(start);
  const bool pass = worst_mean <= kAdvTol && worst_std <= kAdvTol && worst_const == 0.0 &&
                    worst_affine <= kAdvTol && t < kAdvBudgetSec;
  return {pass, fmt("max |mean| %.1e, max |std-1| %.1e, max affine drift %.1e, constant max %.1e",
                    worst_mean, worst_std, worst_affine, worst_const) +
                    fmt(", %.2fs", t)};
}

// 3 ------------------------------------------------------------------------

Verdict reward_suite() {
  const auto start = Clock::now();
  struct Row {
    Profile profile;
    const char* index;
    double delta;
  };
  const std::vector<Row> table{
      {Profile::Amc, "MMSE", 2},         {Profile::Amc, "GDS", 0},
      {Profile::Amc, "CDR", 0},          {Profile::Adni, "MMSE", 2},
      {Profile::Adni, "CDRSB", 1.0},     {Profile::Adni, "ADAS11", 5},
      {Profile::Adni, "ADAS13", 6},      {Profile::Adni, "ADASQ4", 1},
      {Profile::Adni, "RAVLT_learning", 3}, {Profile::Adni, "LDELTOTAL", 2},
  };
  std::size_t checks = 0, failures = 0;
  auto expect = [&](bool ok) {
    ++checks;
    failures += !ok;
  };
  for (const auto& row : table) {
    const auto profile = ToleranceProfile::for_profile(row.profile);
    const double delta = tolerance_for(row.index, profile);
    expect(delta == row.delta);
    const auto index = *parse_index(row.index);
    const auto range = index_range(index);
    for (double truth : index_grid(index)) {
      expect(r_cold(truth, truth, delta) == 1);
      if (truth + delta <= range.hi) expect(r_cold(truth + delta, truth, delta) == 1);
      if (truth - delta >= range.lo) expect(r_cold(truth - delta, truth, delta) == 1);
      expect(r_cold(truth + delta + 0.5, truth, delta) == 0);
      expect(r_cold(truth - delta - 0.5, truth, delta) == 0);
      expect(r_cold(truth + delta + 1e-9, truth, delta) == 0);
      expect(r_cold(truth - delta - 1e-9, truth, delta) == 0);
    }
  }
  expect(ToleranceProfile::amc().entries().size() == 3);
  expect(ToleranceProfile::adni().entries().size() == 7);
  for (int p : {0, 1})
    for (int y : {0, 1}) expect(r_task(p, y) == r_cold(p, y, 0.0));
  const double t = seconds_since(start);
  return {failures == 0 && t < kRewardBudgetSec,
          fmt("%.0f checks over 10 tolerance rows, %.0f failures, %.3fs", static_cast<double>(checks),
              static_cast<double>(failures), t)};
}

// 4 ------------------------------------------------------------------------

std::set<std::string> patients_of(std::span<const LongitudinalSample> samples) {
  std::set<std::string> out;
  for (const auto& s : samples) out.insert(s.patient_id);
  return out;
}

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

Verdict leakage_audit() {
  const auto start = Clock::now();
  const std::regex date_re(R"(\d{4}-\d{2}-\d{2})");
  Rng rng{99};
  std::size_t failed_reports = 0, oracle_overlap = 0, oracle_future = 0, prompts = 0;
  for (std::size_t k = 0; k < kAuditConfigs; ++k) {
    CohortConfig cc;
    cc.profile = k % 2 == 0 ? Profile::Amc : Profile::Adni;
    cc.n_patients = static_cast<std::size_t>(uniform_int(rng, 150, 600));
    cc.seed = rng();
    cc.noise_scale = 2.0 * uniform01(rng);
    cc.max_drift = 0.05 + 0.2 * uniform01(rng);
    DatasetConfig dc;
    dc.seed = rng();
    dc.test_ratio = 0.1 + 0.3 * uniform01(rng);
    dc.max_len = k % 4 == 0 ? 200 : 8000;
    const auto data = prepare_datasets(generate_cohort(cc), dc);
    failed_reports += !data.audit.passed();

    const auto s2_test = patients_of(data.stage2_test());
    oracle_overlap += overlap(s2_test, patients_of(data.stage1_train()));
    oracle_overlap += overlap(s2_test, patients_of(data.stage1_test()));
    oracle_overlap += overlap(s2_test, patients_of(data.stage1_samples));
    oracle_overlap += overlap(s2_test, patients_of(data.stage2_train()));
    oracle_overlap += overlap(patients_of(data.stage1_train()), patients_of(data.stage1_test()));
    for (const auto* set : {&data.stage1_samples, &data.stage2_samples}) {
      for (const auto& s : *set) {
        ++prompts;
        const auto anchor = format_date(s.anchor_date);
        for (std::sregex_iterator it(s.prompt_text.begin(), s.prompt_text.end(), date_re), end;
             it != end; ++it)
          oracle_future += it->str() >= anchor;
      }
    }
  }
  const double t = seconds_since(start);
  const bool pass = failed_reports == 0 && oracle_overlap == 0 && oracle_future == 0 && t < kAuditBudgetSec;
  return {pass, fmt("%.0f configs, %.0f failed audits, independent check: %.0f overlapping patients, ",
                    static_cast<double>(kAuditConfigs), static_cast<double>(failed_reports),
                    static_cast<double>(oracle_overlap)) +
                    fmt("%.0f future dates in %.0f prompts, %.1fs", static_cast<double>(oracle_future),
                        static_cast<double>(prompts), t)};
}

// 5 ------------------------------------------------------------------------

Verdict metric_consistency() {
  const auto start = Clock::now();
  const double amc = f1_from_precision_recall(72.19, 82.56);
  const double adni = f1_from_precision_recall(70.99, 79.31);
  // Confusion counts with the same precision and recall reproduce
  // the same F1 through compute_metrics.
  const auto from_counts = [](double precision, double recall) {
    const std::size_t tp = 100000;
    const auto fp = static_cast<std::size_t>(std::llround(tp * (100.0 / precision - 1.0)));
    const auto fn = static_cast<std::size_t>(std::llround(tp * (100.0 / recall - 1.0)));
    return metrics_from_counts({tp, fp, 0, fn}).f1;
  };
  const double amc_counts = from_counts(72.19, 82.56);
  const double adni_counts = from_counts(70.99, 79.31);
  const double t = seconds_since(start);
  const bool pass = std::abs(amc - 77.03) <= kF1AmcTol && std::abs(adni - 74.91) <= kF1AdniTol &&
                    std::abs(amc_counts - 77.03) <= kF1AmcTol &&
                    std::abs(adni_counts - 74.91) <= kF1AdniTol && t < kMetricBudgetSec;
  return {pass, fmt("AMC F1 %.4f (target 77.03 +- 0.01), ADNI F1 %.4f (target 74.91 +- 0.05), via counts "
                    "%.4f / %.4f",
                    amc, adni, amc_counts, adni_counts)};
}

// 6 ------------------------------------------------------------------------

Verdict cold_start_ablation() {
  const auto start = Clock::now();
  const Recipe recipe = Recipe::from_config(Recipe::default_config());
  const auto result = run_experiment(recipe);
  const double t = seconds_since(start);
  std::size_t failed = 0;
  for (const auto& run : result.runs) failed += !run.ok;
  if (!result.ablation) return {false, "no ablation comparison produced"};
  const auto& a = *result.ablation;
  std::string per_seed;
  for (std::size_t i = 0; i < recipe.n_seeds; ++i) {
    double warm = NAN, cold = NAN;
    for (const auto& run : result.runs) {
      if (run.seed_index != i) continue;
      (run.arm == Arm::GrpoGrpo ? warm : cold) = run.metrics.f1;
    }
    per_seed += fmt(" [%.2f vs %.2f]", warm, cold);
  }
  const bool pass = failed == 0 && a.median_final_f1_with_stage1 >= a.median_final_f1_without_stage1 &&
                    a.steps_ratio() <= kAblationStepsRatio && t < kAblationBudgetSec;
  return {pass,
          fmt("%.0f patients, %.0f seeds, median F1 grpo_grpo %.2f vs grpo_stage2_only %.2f, ",
              static_cast<double>(recipe.cohort.n_patients), static_cast<double>(recipe.n_seeds),
              a.median_final_f1_with_stage1, a.median_final_f1_without_stage1) +
              fmt("median steps to reach %.0f / %.0f (ratio %.3f, need <= 0.5), %.0fs;", a.median_steps_to_reach,
                  static_cast<double>(a.stage2_steps), a.steps_ratio(), t) +
              " per seed" + per_seed};
}

// 7 ------------------------------------------------------------------------

Verdict learning_sanity() {
  const auto start = Clock::now();
  KeyValueConfig c = Recipe::default_config();
  c.set("cohort.noise_scale", "0");
  const Recipe recipe = Recipe::from_config(c);
  const auto data = prepare_datasets(generate_cohort(recipe.cohort), recipe.data);
  std::map<std::string, std::vector<double>> acc;
  std::map<std::string, double> baseline;
  for (std::size_t i = 0; i < recipe.n_seeds; ++i) {
    const auto outcome = run_stage1(recipe, data, recipe.run_seed(i));
    for (const auto& ta : outcome.test_accuracy) {
      const auto name = ta.task.name();
      acc[name].push_back(ta.accuracy);
      baseline[name] = ta.random_baseline;
    }
  }
  const double t = seconds_since(start);
  bool pass = !acc.empty() && t < kSanityBudgetSec;
  std::string detail;
  for (const auto& [name, values] : acc) {
    const double med = median(values);
    const bool ok = med >= kSanityFactor * baseline[name];
    pass = pass && ok;
    detail += " " + name +
              fmt(" median %.2f vs random %.2f (x%.2f);", med, baseline[name], med / baseline[name]);
  }
  return {pass, "zero-noise Stage 1, " + std::to_string(recipe.n_seeds) + " seeds:" + detail +
                    fmt(" %.0fs", t)};
}

// 8 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dementia-r1");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Verdict cli_determinism() {
  const auto root = fs::temp_directory_path() / "dr1_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto p = [&](const std::string& s) { return (root / s).string(); };
  const std::vector<std::string> small{"--set", "cohort.n_patients=300", "--set", "stage1.steps=60",
                                       "--set", "stage2.steps=60", "--set", "eval.interval=20",
                                       "--set", "model.hidden_width=8"};
  // Each command runs twice with identical inputs; only the output
  // directory differs.
  std::vector<std::pair<std::string, std::vector<std::string>>> commands;
  for (const char* tag : {"a", "b"}) {
    const std::string t = tag;
    commands.push_back({"cohort_" + t, {"gen-cohort", "--n", "300", "--seed", "3", "--out",
                                        p("cohort_" + t + "/cohort.jsonl")}});
    commands.push_back({"data_" + t, {"build-samples", "--cohort", p("cohort_a/cohort.jsonl"),
                                      "--seed", "3", "--run-dir", p("data_" + t)}});
    commands.push_back({"s1_" + t, {"train", "--stage", "1", "--data", p("data_a"), "--steps", "60",
                                    "--seed", "3", "--run-dir", p("s1_" + t)}});
    commands.push_back({"s2_" + t, {"train", "--stage", "2", "--data", p("data_a"), "--init",
                                    p("s1_a/policy.ckpt"), "--steps", "60", "--seed", "3",
                                    "--run-dir", p("s2_" + t)}});
    auto ex = small;
    ex.insert(ex.begin(), {"experiment", "--seeds", "2", "--seed", "3", "--run-dir", p("ex_" + t)});
    commands.push_back({"ex_" + t, ex});
  }
  for (const auto& [name, args] : commands)
    if (const int code = cli(args); code != 0)
      return {false, name + " exited with " + std::to_string(code)};

  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const char* stem : {"cohort", "data", "s1", "s2", "ex"}) {
    const auto a = root / (std::string{stem} + "_a");
    const auto b = root / (std::string{stem} + "_b");
    for (const auto& e : fs::directory_iterator(a)) {
      const auto name = e.path().filename();
      ++compared;
      if (!fs::exists(b / name) || slurp(e.path()) != slurp(b / name))
        differing.push_back(std::string{stem} + "/" + name.string());
    }
  }
  fs::remove_all(root);
  std::string detail = std::to_string(compared) + " files compared across 5 commands";
  for (const auto& d : differing) detail += ", differs: " + d;
  return {differing.empty() && compared > 0, detail};
}

// 9 ------------------------------------------------------------------------

Verdict wire_round_trip() {
  std::size_t visits_checked = 0, mismatches = 0, answers = 0, answer_failures = 0;
  for (Profile profile : {Profile::Amc, Profile::Adni}) {
    CohortConfig cc;
    cc.profile = profile;
    cc.n_patients = 200;
    cc.seed = 5;
    const auto cohort = generate_cohort(cc);
    std::map<std::string, const Patient*> by_id;
    for (const auto& pt : cohort.patients) by_id[pt.patient_id] = &pt;
    const auto samples = build_stage1_samples(cohort, GapScheme::stage1(profile),
                                              profile_indices(profile));
    const auto layout = FeatureLayout::for_profile(profile);
    for (const auto& s : samples) {
      const auto& patient = *by_id.at(s.patient_id);
      const auto parsed = parse_history(s.prompt_text);
      std::vector<const Visit*> expected;
      for (const auto& v : patient.visits)
        if (v.date < s.anchor_date) expected.push_back(&v);
      if (parsed.size() != expected.size()) {
        ++mismatches;
        continue;
      }
      for (std::size_t i = 0; i < parsed.size(); ++i) {
        ++visits_checked;
        mismatches += parsed[i].date != expected[i]->date ||
                      parsed[i].observations != expected[i]->observations;
      }
      // The value slots of the feature vector come from the parsed history.
      const auto x = featurize(s, layout);
      for (std::size_t k = 0; k < layout.indices().size(); ++k) {
        const auto idx = layout.indices()[k];
        const auto it = std::find_if(expected.rbegin(), expected.rend(),
                                     [&](const Visit* v) { return v->observations.count(idx) > 0; });
        if (it == expected.rend()) continue;
        const auto range = index_range(idx);
        mismatches += x[static_cast<Eigen::Index>(layout.index_slot(k))] !=
                      ((*it)->observations.at(idx) - range.lo) / (range.hi - range.lo);
      }
    }
    for (ClinicalIndex idx : profile_indices(profile))
      for (double v : index_grid(idx)) {
        ++answers;
        const auto got = parse_boxed_answer(format_completion(v));
        answer_failures += !got || got->value != v;
      }
  }
  for (double v : {0.0, 1.0}) {
    ++answers;
    const auto got = parse_boxed_answer(format_completion(v));
    answer_failures += !got || got->value != v;
  }
  return {mismatches == 0 && answer_failures == 0 && visits_checked > 0,
          fmt("%.0f visits recovered with %.0f mismatches; %.0f answers round-tripped with %.0f failures",
              static_cast<double>(visits_checked), static_cast<double>(mismatches),
              static_cast<double>(answers), static_cast<double>(answer_failures))};
}

}  // namespace

int main() {
  bool all = true;
  all &= report(1, "gradient oracle", gradient_oracle);
  all &= report(2, "advantage suite", advantage_suite);
  all &= report(3, "reward/tolerance suite", reward_suite);
  all &= report(4, "leakage audit", leakage_audit);
  all &= report(5, "metric consistency", metric_consistency);
  all &= report(6, "cold-start ablation", cold_start_ablation);
  all &= report(7, "learning sanity", learning_sanity);
  all &= report(8, "determinism", cli_determinism);
  all &= report(9, "wire-format round trip", wire_round_trip);
  return all ? 0 : 1;
}
