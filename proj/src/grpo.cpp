#include "dementia_r1/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dementia_r1/errors.hpp"

namespace dr1 {

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

std::optional<OptimizerKind> parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  return std::nullopt;
}

void GRPOConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (!(clip_epsilon > 0.0)) throw ConfigError("clip_epsilon must be > 0");
  if (!(kl_coef >= 0.0)) throw ConfigError("kl_coef must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be finite and >= 0");
  if (queries_per_step < 1) throw ConfigError("queries_per_step must be >= 1");
}

std::vector<double> compute_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ArgumentError("advantages need a group of at least 2");
  std::vector<double> advantages(rewards.size(), 0.0);
  if (std::adjacent_find(rewards.begin(), rewards.end(), std::not_equal_to<>{}) == rewards.end())
    return advantages;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);
  if (std_dev == 0.0) return advantages;
  for (std::size_t i = 0; i < rewards.size(); ++i) advantages[i] = (rewards[i] - mean) / std_dev;
  return advantages;
}

double kl_divergence(const CategoricalDistribution& current,
                     const CategoricalDistribution& reference) {
  if (!(current.task == reference.task) || current.probs.size() != reference.probs.size())
    throw ArgumentError("KL needs distributions over the same action space");
  double kl = 0.0;
  for (Eigen::Index a = 0; a < current.probs.size(); ++a)
    if (current.probs[a] > 0.0)
      kl += current.probs[a] * (current.log_probs[a] - reference.log_probs[a]);
  return std::max(kl, 0.0);
}

ClippedTerm clipped_surrogate_term(double ratio, double advantage, double clip_epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  const double unclipped_value = ratio * advantage;
  const double clipped_value = clipped * advantage;
  if (unclipped_value <= clipped_value) return {unclipped_value, advantage};
  return {clipped_value, 0.0};
}

SurrogateResult surrogate_objective(const PolicyParams& params, const RolloutGroup& group,
                                    const PolicyParams& reference, const GRPOConfig& config) {
  const std::size_t g = group.actions.size();
  if (g == 0 || group.old_log_probs.size() != g || group.advantages.size() != g)
    throw ArgumentError("rollout group arrays must have equal, non-zero length");
  const auto current = forward(params, group.task, group.features);
  const auto ref = forward(reference, group.task, group.features);

  Eigen::VectorXd dlogits = Eigen::VectorXd::Zero(current.probs.size());
  double value = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    const auto a = static_cast<Eigen::Index>(group.actions[i]);
    if (a >= current.probs.size()) throw ArgumentError("rollout action out of range");
    const double ratio = std::exp(current.log_probs[a] - group.old_log_probs[i]);
    if (!std::isfinite(ratio)) throw NumericError("non-finite importance ratio");
    const auto term = clipped_surrogate_term(ratio, group.advantages[i], config.clip_epsilon);
    value += term.value;
    // d ratio / d logits = ratio * (onehot(a) - p)
    const double w = term.ratio_weight * ratio / static_cast<double>(g);
    if (w != 0.0) {
      dlogits -= w * current.probs;
      dlogits[a] += w;
    }
  }
  value /= static_cast<double>(g);

  const double kl = kl_divergence(current, ref);
  if (config.kl_coef > 0.0) {
    // d KL / d logits_j = p_j (log p_j - log q_j - KL)
    const Eigen::VectorXd kl_grad =
        (current.probs.array() * (current.log_probs.array() - ref.log_probs.array() - kl)).matrix();
    dlogits -= config.kl_coef * kl_grad;
  }
  return {value - config.kl_coef * kl, kl,
          backprop_logits(params, group.task, group.features, dlogits)};
}

RewardFn cold_start_reward(ToleranceProfile tolerances) {
  return [tolerances = std::move(tolerances)](const LongitudinalSample& sample,
                                              std::string_view completion) -> double {
    const auto answer = parse_boxed_answer(completion);
    if (!answer) return 0.0;
    const double delta = tolerance_for(index_name(sample.task.index()), tolerances);
    return r_cold(answer->value, sample.target, delta);
  };
}

RewardFn task_reward() {
  return [](const LongitudinalSample& sample, std::string_view completion) -> double {
    const auto answer = parse_boxed_answer(completion);
    if (!answer || (answer->value != 0.0 && answer->value != 1.0)) return 0.0;
    return r_task(static_cast<int>(answer->value), static_cast<int>(sample.target));
  };
}

std::vector<TrainingExample> make_examples(std::span<const LongitudinalSample> samples,
                                           const FeatureLayout& layout) {
  std::vector<TrainingExample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s, featurize(s, layout)});
  return out;
}

TrainState::TrainState(PolicyParams init) : params(init), reference(std::move(init)) {}

void train_step(TrainState& state, std::span<const TrainingExample* const> batch,
                const RewardFn& reward_fn, const GRPOConfig& config, Rng& rng) {
  if (batch.empty()) throw ArgumentError("train_step needs at least one query");
  PolicyParams summed = state.params.zeros_like();
  StepRecord record;
  record.step = state.step + 1;
  for (const TrainingExample* example : batch) {
    const Task& task = example->sample.task;
    const auto& space = state.params.head(task).space;
    RolloutGroup group;
    group.task = task;
    group.features = example->features;
    for (const auto& draw :
         sample_group(state.params, task, example->features, config.group_size, rng)) {
      group.actions.push_back(draw.action_index);
      group.old_log_probs.push_back(draw.log_prob);
      group.rewards.push_back(reward_fn(example->sample, format_completion(space.value(draw.action_index))));
    }
    group.advantages = compute_advantages(group.rewards);
    const auto result = surrogate_objective(state.params, group, state.reference, config);
    summed.add_scaled(result.gradient, 1.0);
    record.mean_reward += std::accumulate(group.rewards.begin(), group.rewards.end(), 0.0) /
                          static_cast<double>(group.rewards.size());
    record.surrogate_value += result.value;
    record.kl += result.kl;
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  PolicyParams gradient = state.params.zeros_like();
  gradient.add_scaled(summed, scale);
  record.mean_reward *= scale;
  record.surrogate_value *= scale;
  record.kl *= scale;
  record.grad_norm = std::sqrt(gradient.squared_norm());
  if (!gradient.all_finite()) throw NumericError("non-finite gradient");

  PolicyParams next = state.params;
  std::optional<AdamState> adam = state.adam;
  if (config.optimizer == OptimizerKind::Sgd) {
    next.add_scaled(gradient, config.learning_rate);
  } else {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (!adam) adam = AdamState{state.params.zeros_like(), state.params.zeros_like(), 0};
    ++adam->t;
    auto g = gradient.flatten();
    auto m = adam->first.flatten();
    auto v = adam->second.flatten();
    auto p = next.flatten();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam->t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam->t));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      p[i] += config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
    adam->first.assign(m);
    adam->second.assign(v);
    next.assign(p);
  }
  if (!next.all_finite()) throw NumericError("update produced non-finite parameters");

  state.params = std::move(next);
  state.adam = std::move(adam);
  state.step = record.step;
  state.history.push_back(record);
}

TrainResult train(const GRPOConfig& config, std::span<const TrainingExample> data,
                  const PolicyParams& init, const RewardFn& reward_fn, const EvalHook& hook,
                  std::size_t eval_interval) {
  config.validate();
  if (data.empty()) throw ConfigError("training data is empty");
  TrainState state{init};
  Rng order_rng{derive_seed(config.seed, "order")};
  Rng rollout_rng{derive_seed(config.seed, "rollout")};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  if (hook) hook(0, state.params);
  std::vector<const TrainingExample*> batch;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    batch.clear();
    for (std::size_t q = 0; q < config.queries_per_step; ++q) {
      if (cursor == order.size()) {
        shuffle_range(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    train_step(state, batch, reward_fn, config, rollout_rng);
    if (hook && eval_interval > 0 && (step % eval_interval == 0 || step == config.steps))
      hook(step, state.params);
  }
  return {std::move(state.params), std::move(state.history)};
}

void write_history(std::ostream& out, std::span<const StepRecord> history) {
  for (const auto& r : history) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["mean_reward"] = r.mean_reward;
    j["surrogate_value"] = r.surrogate_value;
    j["kl"] = r.kl;
    j["grad_norm"] = r.grad_norm;
    out << j.dump() << '\n';
  }
}

}  // namespace dr1
