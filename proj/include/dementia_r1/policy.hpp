#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dementia_r1/clinical_index.hpp"
#include "dementia_r1/dates.hpp"
#include "dementia_r1/random.hpp"
#include "dementia_r1/samples.hpp"

namespace dr1 {

class ActionSpace {
 public:
  // Throws ArgumentError if empty, duplicated, or outside the task's range.
  ActionSpace(Task task, std::vector<double> actions);

  // Index grid for forecasting tasks, {0, 1} for diagnosis.
  static ActionSpace for_task(Task task);

  Task task() const { return task_; }
  const std::vector<double>& actions() const { return actions_; }
  std::size_t size() const { return actions_.size(); }
  double value(std::size_t i) const { return actions_.at(i); }

  // Position of an exact action value; throws ArgumentError if absent.
  std::size_t index_of(double value) const;

  friend bool operator==(const ActionSpace&, const ActionSpace&) = default;

 private:
  Task task_;
  std::vector<double> actions_;
};

using FeatureVector = Eigen::VectorXd;

// Feature slots, in order:
//   per profile index (alphabetical): last value scaled to [0,1],
//     last-minus-first scaled by the range, presence flag;
//   visit count / 20 (capped at 1), history span in months / 60,
//   gap_months / 24;
//   one-hot over the profile's Stage-1 then Stage-2 gap bucket labels.
// Absent indices use 0 in both value slots with presence 0.
class FeatureLayout {
 public:
  static FeatureLayout for_profile(Profile profile);

  Profile profile() const { return profile_; }
  std::span<const ClinicalIndex> indices() const { return indices_; }
  const std::vector<std::string>& bucket_labels() const { return bucket_labels_; }

  std::size_t index_slot(std::size_t i) const { return 3 * i; }
  std::size_t count_slot() const { return 3 * indices_.size(); }
  std::size_t span_slot() const { return count_slot() + 1; }
  std::size_t gap_slot() const { return count_slot() + 2; }
  std::size_t bucket_slot(std::string_view label) const;  // throws ParseError
  std::size_t dim() const { return count_slot() + 3 + bucket_labels_.size(); }

 private:
  Profile profile_ = Profile::Amc;
  std::vector<ClinicalIndex> indices_;
  std::vector<std::string> bucket_labels_;
};

struct ParsedVisit {
  Date date;
  std::map<ClinicalIndex, double> observations;
};

// Inverse of linearize_history. Visits come back sorted by date. Throws
// ParseError on any line that does not follow the visit grammar.
std::vector<ParsedVisit> parse_history(std::string_view prompt);

FeatureVector featurize(const LongitudinalSample& sample, const FeatureLayout& layout);

struct PolicyHead {
  ActionSpace space;
  Eigen::MatrixXd weight;  // actions x (hidden width, or feature dim when linear)
  Eigen::VectorXd bias;
};

// Shared tanh trunk feeding one softmax head per task. A hidden width of 0
// gives a linear-softmax model straight from features.
class PolicyParams {
 public:
  PolicyParams(Profile profile, std::size_t feature_dim, std::size_t hidden_width,
               std::vector<ActionSpace> spaces);

  // Heads for every profile index plus diagnosis, all parameters zero.
  static PolicyParams standard(Profile profile, std::size_t hidden_width);

  // Weights uniform on [-scale, scale]; biases zero.
  void randomize(double scale, Rng& rng);

  Profile profile() const { return profile_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t hidden_width() const { return hidden_width_; }

  std::size_t head_index(const Task& task) const;  // throws LookupError
  const PolicyHead& head(const Task& task) const { return heads[head_index(task)]; }

  std::size_t parameter_count() const;
  // Trunk weight (column-major), trunk bias, then each head's weight and bias.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  PolicyParams zeros_like() const;
  PolicyParams& add_scaled(const PolicyParams& other, double scale);
  double squared_norm() const;
  bool all_finite() const;

  Eigen::MatrixXd hidden_weight;  // hidden x feature
  Eigen::VectorXd hidden_bias;
  std::vector<PolicyHead> heads;

 private:
  Profile profile_;
  std::size_t feature_dim_;
  std::size_t hidden_width_;
};

struct CategoricalDistribution {
  Task task = Task::diagnosis();
  Eigen::VectorXd logits;
  Eigen::VectorXd log_probs;
  Eigen::VectorXd probs;
};

// Softmax over the task head's logits. Throws NumericError when anything
// along the way is non-finite and ArgumentError on shape mismatch.
CategoricalDistribution forward(const PolicyParams& params, const Task& task,
                                const FeatureVector& features);

// log pi(action); throws ArgumentError if the value is not an action.
double log_prob(const CategoricalDistribution& dist, const ActionSpace& space, double action);

// Highest-probability action index; ties go to the lowest index.
std::size_t greedy_action(const CategoricalDistribution& dist);

struct SampledAction {
  std::size_t action_index = 0;
  double value = 0.0;
  double log_prob = 0.0;
};

// G i.i.d. draws from forward(params, task, features); throws ArgumentError
// for G < 2.
std::vector<SampledAction> sample_group(const PolicyParams& params, const Task& task,
                                        const FeatureVector& features, std::size_t group_size,
                                        Rng& rng);

// Gradient of sum_a dlogits[a] * logit_a with respect to every parameter.
PolicyParams backprop_logits(const PolicyParams& params, const Task& task,
                             const FeatureVector& features, const Eigen::VectorXd& dlogits);

// d log pi(action) / d params via onehot(action) - p.
PolicyParams grad_log_prob(const PolicyParams& params, const Task& task,
                           const FeatureVector& features, std::size_t action_index);

// Binary checkpoint: 8-byte magic "DR1CKPT\0", u32 version, profile name,
// u32 feature dim, u32 hidden width, u32 head count, per head (task name,
// u32 action count, f64 actions), u64 parameter count, f64 parameters.
// Strings are u32-length-prefixed; everything little-endian.
void write_checkpoint(std::ostream& out, const PolicyParams& params);
PolicyParams read_checkpoint(std::istream& in);

}  // namespace dr1
