#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dementia_r1/cohort.hpp"
#include "dementia_r1/config.hpp"
#include "dementia_r1/grpo.hpp"
#include "dementia_r1/metrics.hpp"
#include "dementia_r1/policy.hpp"
#include "dementia_r1/samples.hpp"

namespace dr1 {

enum class Arm : std::uint8_t {
  GrpoGrpo,        // Stage 1 then Stage 2
  GrpoStage2Only,  // Stage 2 from a fresh policy
  GrpoStage1Only,  // Stage 1 only; diagnosis head left at initialization
};

std::string_view arm_name(Arm arm);
std::optional<Arm> parse_arm(std::string_view name);
bool arm_needs_stage1(Arm arm);
bool arm_needs_stage2(Arm arm);

// Stage defaults used by recipes: Adam at learning rate 0.003.
GRPOConfig default_stage_config();

struct Recipe {
  std::vector<Arm> arms{Arm::GrpoGrpo, Arm::GrpoStage2Only};
  CohortConfig cohort;
  DatasetConfig data;
  GRPOConfig stage1 = default_stage_config();
  GRPOConfig stage2 = default_stage_config();
  std::size_t hidden_width = 32;
  double init_scale = 0.1;
  std::size_t eval_interval = 100;
  std::uint64_t seed = 0;
  std::size_t n_seeds = 5;

  // Training seed of run i; cohort and split seeds stay fixed across runs.
  std::uint64_t run_seed(std::size_t i) const;

  void validate() const;  // throws ConfigError

  // Every recognised key with its default value.
  static KeyValueConfig default_config();
  static const std::vector<std::string>& known_keys();
  // Rejects unknown keys and arm names with ConfigError.
  static Recipe from_config(const KeyValueConfig& config);
};

struct CurvePoint {
  std::size_t step = 0;
  double value = 0.0;
};

struct TaskAccuracy {
  Task task = Task::diagnosis();
  double accuracy = 0.0;         // percent, greedy, tolerance-aware
  double random_baseline = 0.0;  // percent expected from uniform guessing
  std::size_t n_samples = 0;
};

struct Stage1Outcome {
  PolicyParams params;
  std::vector<StepRecord> history;
  std::vector<TaskAccuracy> test_accuracy;
  std::vector<CurvePoint> curve;  // mean test accuracy over tasks
};

struct Stage2Outcome {
  PolicyParams params;
  std::vector<StepRecord> history;
  std::vector<CurvePoint> f1_curve;  // test F1 (percent) at each evaluation
  MetricsReport final_metrics;       // natural-prevalence test split, stratified
};

// Fresh randomized policy for a run seed.
PolicyParams initial_policy(const Recipe& recipe, Profile profile, std::uint64_t run_seed);

// Greedy index accuracy per task against the profile's tolerances, with
// the uniform-guess rate over the same samples.
std::vector<TaskAccuracy> evaluate_index_tasks(const PolicyParams& params,
                                               std::span<const TrainingExample> examples);

// Greedy diagnosis predictions.
std::vector<int> predict_diagnosis(const PolicyParams& params,
                                   std::span<const TrainingExample> examples);

// Both stages throw LeakageError before training if the audit failed.
Stage1Outcome run_stage1(const Recipe& recipe, const PreparedData& data, std::uint64_t run_seed);
Stage2Outcome run_stage2(const Recipe& recipe, const PreparedData& data, std::uint64_t run_seed,
                         const std::optional<PolicyParams>& init);

struct ArmRun {
  Arm arm = Arm::GrpoGrpo;
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
  std::vector<CurvePoint> f1_curve;
  std::vector<TaskAccuracy> stage1_accuracy;
};

struct ArmSummary {
  Arm arm = Arm::GrpoGrpo;
  std::size_t succeeded = 0;
  MetricsReport aggregate;
  double median_final_f1 = 0.0;
};

// grpo_grpo against grpo_stage2_only, paired by seed.
struct AblationComparison {
  double median_final_f1_with_stage1 = 0.0;
  double median_final_f1_without_stage1 = 0.0;
  // Per seed: first evaluated Stage-2 step at which the warm-started run
  // reaches the cold run's final F1; nullopt if it never does.
  std::vector<std::optional<std::size_t>> steps_to_reach;
  double median_steps_to_reach = 0.0;  // +inf when most seeds never reach
  std::size_t stage2_steps = 0;
  double steps_ratio() const;
};

struct ExperimentResult {
  std::vector<ArmRun> runs;  // one per (arm, seed)
  std::vector<ArmSummary> arms;
  std::optional<AblationComparison> ablation;
  LeakageReport audit;
};

// Builds the cohort and datasets, then every arm for every seed. A failing
// run is recorded and the rest proceed. Throws LeakageError if the audit
// fails.
ExperimentResult run_experiment(const Recipe& recipe);
ExperimentResult run_experiment(const Recipe& recipe, const PreparedData& data);

// Earliest curve step with value >= threshold.
std::optional<std::size_t> steps_to_reach(std::span<const CurvePoint> curve, double threshold);

double median(std::vector<double> values);

// <arm>.report.txt, <arm>.records.jsonl, <arm>.curves.jsonl per arm, plus
// summary.txt and summary.jsonl.
void write_experiment_reports(const std::filesystem::path& dir, const ExperimentResult& result);

}  // namespace dr1
