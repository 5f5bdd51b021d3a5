#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dementia_r1/policy.hpp"
#include "dementia_r1/reward.hpp"
#include "dementia_r1/samples.hpp"

namespace dr1 {

enum class OptimizerKind : std::uint8_t { Sgd, Adam };

std::string_view optimizer_name(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer(std::string_view name);

struct GRPOConfig {
  std::size_t group_size = 8;
  double clip_epsilon = 0.2;
  double kl_coef = 0.01;
  double learning_rate = 0.1;
  std::size_t steps = 5000;
  // One query per step gives an effective batch of group_size completions.
  std::size_t queries_per_step = 1;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// Group-normalized advantages with the population standard deviation.
// A constant reward vector yields all zeros. Throws ArgumentError for fewer
// than two rewards.
std::vector<double> compute_advantages(std::span<const double> rewards);

// Exact KL(current || reference) over a shared action space.
double kl_divergence(const CategoricalDistribution& current,
                     const CategoricalDistribution& reference);

// One member's min(r A, clip(r, 1-eps, 1+eps) A) and its derivative with
// respect to r, which is zero whenever the clipped branch is selected.
struct ClippedTerm {
  double value = 0.0;
  double ratio_weight = 0.0;
};
ClippedTerm clipped_surrogate_term(double ratio, double advantage, double clip_epsilon);

struct RolloutGroup {
  Task task = Task::diagnosis();
  FeatureVector features;
  std::vector<std::size_t> actions;
  std::vector<double> old_log_probs;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct SurrogateResult {
  double value = 0.0;
  double kl = 0.0;
  PolicyParams gradient;
};

// (1/G) sum_i min(r_i A_i, clip(r_i) A_i) - beta * KL(pi_theta || pi_ref) for
// one query, with its exact gradient. Throws NumericError on non-finite
// ratios.
SurrogateResult surrogate_objective(const PolicyParams& params, const RolloutGroup& group,
                                    const PolicyParams& reference, const GRPOConfig& config);

// Scores one completion for one sample.
using RewardFn = std::function<double(const LongitudinalSample&, std::string_view)>;

// Tolerance-aware index reward; malformed completions score 0.
RewardFn cold_start_reward(ToleranceProfile tolerances);
// Exact-match diagnosis reward; malformed or non-binary answers score 0.
RewardFn task_reward();

struct TrainingExample {
  LongitudinalSample sample;
  FeatureVector features;
};

std::vector<TrainingExample> make_examples(std::span<const LongitudinalSample> samples,
                                           const FeatureLayout& layout);

struct StepRecord {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double surrogate_value = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
};

struct AdamState {
  PolicyParams first;
  PolicyParams second;
  std::size_t t = 0;
};

struct TrainState {
  explicit TrainState(PolicyParams init);

  PolicyParams params;
  PolicyParams reference;  // frozen for the whole stage
  std::size_t step = 0;
  std::vector<StepRecord> history;
  std::optional<AdamState> adam;
};

// One GRPO step: per query, sample G completions from the current policy
// (which is also the old policy), score them, normalize advantages, and
// ascend the averaged surrogate. Leaves `state` untouched if anything throws.
void train_step(TrainState& state, std::span<const TrainingExample* const> batch,
                const RewardFn& reward_fn, const GRPOConfig& config, Rng& rng);

using EvalHook = std::function<void(std::size_t step, const PolicyParams& params)>;

struct TrainResult {
  PolicyParams params;
  std::vector<StepRecord> history;
};

// Runs config.steps steps over epoch-shuffled data. The hook runs at step 0,
// every eval_interval steps, and after the last step. Throws ConfigError on
// empty data.
TrainResult train(const GRPOConfig& config, std::span<const TrainingExample> data,
                  const PolicyParams& init, const RewardFn& reward_fn, const EvalHook& hook = {},
                  std::size_t eval_interval = 100);

// Line-delimited {step, mean_reward, surrogate_value, kl, grad_norm}.
void write_history(std::ostream& out, std::span<const StepRecord> history);

}  // namespace dr1
