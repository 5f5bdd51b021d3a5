#include "dementia_r1/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>

#include "dementia_r1/errors.hpp"
#include "dementia_r1/text.hpp"

namespace dr1 {

// ---------------------------------------------------------------------------
// Action spaces

ActionSpace::ActionSpace(Task task, std::vector<double> actions)
    : task_(task), actions_(std::move(actions)) {
  if (actions_.empty()) throw ArgumentError("action space must be non-empty");
  std::set<double> seen;
  for (double a : actions_) {
    if (!seen.insert(a).second) throw ArgumentError("duplicate action " + format_number(a));
    if (task_.is_diagnosis()) {
      if (a != 0.0 && a != 1.0) throw ArgumentError("diagnosis actions must be 0 or 1");
    } else {
      const auto range = index_range(task_.index());
      if (!(a >= range.lo && a <= range.hi))
        throw ArgumentError("action " + format_number(a) + " outside " + task_.name() + " range");
    }
  }
}

ActionSpace ActionSpace::for_task(Task task) {
  if (task.is_diagnosis()) return ActionSpace{task, {0.0, 1.0}};
  return ActionSpace{task, index_grid(task.index())};
}

std::size_t ActionSpace::index_of(double value) const {
  const auto it = std::find(actions_.begin(), actions_.end(), value);
  if (it == actions_.end())
    throw ArgumentError(format_number(value) + " is not an action of " + task_.name());
  return static_cast<std::size_t>(it - actions_.begin());
}

// ---------------------------------------------------------------------------
// Features

FeatureLayout FeatureLayout::for_profile(Profile profile) {
  FeatureLayout layout;
  layout.profile_ = profile;
  const auto indices = profile_indices(profile);
  layout.indices_.assign(indices.begin(), indices.end());
  for (const auto& scheme : {GapScheme::stage1(profile), GapScheme::stage2(profile)})
    for (auto& label : scheme.labels())
      if (std::find(layout.bucket_labels_.begin(), layout.bucket_labels_.end(), label) ==
          layout.bucket_labels_.end())
        layout.bucket_labels_.push_back(std::move(label));
  return layout;
}

std::size_t FeatureLayout::bucket_slot(std::string_view label) const {
  const auto it = std::find(bucket_labels_.begin(), bucket_labels_.end(), label);
  if (it == bucket_labels_.end())
    throw ParseError("gap bucket '" + std::string{label} + "' unknown to the " +
                     std::string{profile_name(profile_)} + " feature layout");
  return gap_slot() + 1 + static_cast<std::size_t>(it - bucket_labels_.begin());
}

namespace {

bool consume(std::string_view& text, std::string_view prefix) {
  if (text.substr(0, prefix.size()) != prefix) return false;
  text.remove_prefix(prefix.size());
  return true;
}

bool consume_digits(std::string_view& text) {
  std::size_t n = 0;
  while (n < text.size() && text[n] >= '0' && text[n] <= '9') ++n;
  text.remove_prefix(n);
  return n > 0;
}

ParsedVisit parse_visit_line(std::string_view line, std::size_t line_no) {
  auto fail = [&](std::string_view why) {
    return ParseError("prompt line " + std::to_string(line_no) + ": " + std::string{why});
  };
  const auto date = parse_date(line.substr(0, 10));
  if (!date) throw fail("expected YYYY-MM-DD date");
  std::string_view rest = line.substr(10);
  if (!consume(rest, ": <<<VISIT ") || !consume_digits(rest) || !consume(rest, "/") ||
      !consume_digits(rest) || !consume(rest, ">>>"))
    throw fail("expected visit header");
  ParsedVisit visit{*date, {}};
  if (rest.empty()) return visit;
  if (!consume(rest, " ")) throw fail("expected observations after header");
  for (std::string_view pair : split(rest, ',')) {
    pair = trim(pair);
    const auto colon = pair.find(": ");
    if (colon == std::string_view::npos) throw fail("expected KEY: value");
    const auto index = parse_index(pair.substr(0, colon));
    if (!index) throw fail("unknown index " + std::string{pair.substr(0, colon)});
    const auto value = parse_number(pair.substr(colon + 2));
    if (!value) throw fail("non-numeric value for " + std::string{pair.substr(0, colon)});
    if (!visit.observations.emplace(*index, *value).second) throw fail("repeated index");
  }
  return visit;
}

}  // namespace

std::vector<ParsedVisit> parse_history(std::string_view prompt) {
  std::vector<ParsedVisit> visits;
  std::size_t line_no = 0;
  for (std::string_view line : split(prompt, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    visits.push_back(parse_visit_line(line, line_no));
  }
  std::stable_sort(visits.begin(), visits.end(),
                   [](const ParsedVisit& a, const ParsedVisit& b) { return a.date < b.date; });
  return visits;
}

FeatureVector featurize(const LongitudinalSample& sample, const FeatureLayout& layout) {
  const auto visits = parse_history(sample.prompt_text);
  FeatureVector x = FeatureVector::Zero(static_cast<Eigen::Index>(layout.dim()));
  const auto indices = layout.indices();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const ParsedVisit* first = nullptr;
    const ParsedVisit* last = nullptr;
    for (const auto& v : visits) {
      if (!v.observations.contains(indices[i])) continue;
      if (!first) first = &v;
      last = &v;
    }
    if (!last) continue;
    const auto range = index_range(indices[i]);
    const double width = range.hi - range.lo;
    const double last_value = last->observations.at(indices[i]);
    const double first_value = first->observations.at(indices[i]);
    const auto slot = static_cast<Eigen::Index>(layout.index_slot(i));
    x[slot] = (last_value - range.lo) / width;
    x[slot + 1] = (last_value - first_value) / width;
    x[slot + 2] = 1.0;
  }
  x[static_cast<Eigen::Index>(layout.count_slot())] =
      std::min<double>(static_cast<double>(visits.size()), 20.0) / 20.0;
  if (visits.size() >= 2)
    x[static_cast<Eigen::Index>(layout.span_slot())] =
        months_between(visits.front().date, visits.back().date) / 60.0;
  x[static_cast<Eigen::Index>(layout.gap_slot())] = sample.gap_months / 24.0;
  x[static_cast<Eigen::Index>(layout.bucket_slot(sample.gap_bucket))] = 1.0;
  return x;
}

// ---------------------------------------------------------------------------
// Parameters

PolicyParams::PolicyParams(Profile profile, std::size_t feature_dim, std::size_t hidden_width,
                           std::vector<ActionSpace> spaces)
    : profile_(profile), feature_dim_(feature_dim), hidden_width_(hidden_width) {
  const auto f = static_cast<Eigen::Index>(feature_dim);
  const auto h = static_cast<Eigen::Index>(hidden_width);
  hidden_weight = Eigen::MatrixXd::Zero(h, f);
  hidden_bias = Eigen::VectorXd::Zero(h);
  const Eigen::Index input = hidden_width > 0 ? h : f;
  std::set<std::string> names;
  for (auto& space : spaces) {
    if (!names.insert(space.task().name()).second)
      throw ArgumentError("duplicate head for " + space.task().name());
    const auto n = static_cast<Eigen::Index>(space.size());
    heads.push_back({std::move(space), Eigen::MatrixXd::Zero(n, input), Eigen::VectorXd::Zero(n)});
  }
}

PolicyParams PolicyParams::standard(Profile profile, std::size_t hidden_width) {
  std::vector<ActionSpace> spaces;
  for (ClinicalIndex index : profile_indices(profile))
    spaces.push_back(ActionSpace::for_task(Task::forecast(index)));
  spaces.push_back(ActionSpace::for_task(Task::diagnosis()));
  return PolicyParams{profile, FeatureLayout::for_profile(profile).dim(), hidden_width,
                      std::move(spaces)};
}

void PolicyParams::randomize(double scale, Rng& rng) {
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = scale * (2.0 * uniform01(rng) - 1.0);
  };
  fill(hidden_weight);
  hidden_bias.setZero();
  for (auto& head : heads) {
    fill(head.weight);
    head.bias.setZero();
  }
}

std::size_t PolicyParams::head_index(const Task& task) const {
  for (std::size_t i = 0; i < heads.size(); ++i)
    if (heads[i].space.task() == task) return i;
  throw LookupError("policy has no head for task " + task.name());
}

std::size_t PolicyParams::parameter_count() const {
  auto n = static_cast<std::size_t>(hidden_weight.size() + hidden_bias.size());
  for (const auto& head : heads) n += static_cast<std::size_t>(head.weight.size() + head.bias.size());
  return n;
}

std::vector<double> PolicyParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  auto append = [&](const auto& m) { flat.insert(flat.end(), m.data(), m.data() + m.size()); };
  append(hidden_weight);
  append(hidden_bias);
  for (const auto& head : heads) {
    append(head.weight);
    append(head.bias);
  }
  return flat;
}

void PolicyParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count())
    throw ArgumentError("flat parameter vector has wrong length");
  std::size_t pos = 0;
  auto take = [&](auto& m) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), m.size(), m.data());
    pos += static_cast<std::size_t>(m.size());
  };
  take(hidden_weight);
  take(hidden_bias);
  for (auto& head : heads) {
    take(head.weight);
    take(head.bias);
  }
}

PolicyParams PolicyParams::zeros_like() const {
  PolicyParams out = *this;
  out.hidden_weight.setZero();
  out.hidden_bias.setZero();
  for (auto& head : out.heads) {
    head.weight.setZero();
    head.bias.setZero();
  }
  return out;
}

PolicyParams& PolicyParams::add_scaled(const PolicyParams& other, double scale) {
  if (other.parameter_count() != parameter_count() || other.heads.size() != heads.size())
    throw ArgumentError("parameter shapes differ");
  hidden_weight += scale * other.hidden_weight;
  hidden_bias += scale * other.hidden_bias;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    heads[i].weight += scale * other.heads[i].weight;
    heads[i].bias += scale * other.heads[i].bias;
  }
  return *this;
}

double PolicyParams::squared_norm() const {
  double s = hidden_weight.squaredNorm() + hidden_bias.squaredNorm();
  for (const auto& head : heads) s += head.weight.squaredNorm() + head.bias.squaredNorm();
  return s;
}

bool PolicyParams::all_finite() const {
  bool ok = hidden_weight.allFinite() && hidden_bias.allFinite();
  for (const auto& head : heads) ok = ok && head.weight.allFinite() && head.bias.allFinite();
  return ok;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void check_features(const PolicyParams& params, const FeatureVector& x) {
  if (static_cast<std::size_t>(x.size()) != params.feature_dim())
    throw ArgumentError("feature vector has " + std::to_string(x.size()) + " entries, policy expects " +
                        std::to_string(params.feature_dim()));
}

Eigen::VectorXd trunk(const PolicyParams& params, const FeatureVector& x) {
  if (params.hidden_width() == 0) return x;
  return (params.hidden_weight * x + params.hidden_bias).array().tanh().matrix();
}

}  // namespace

CategoricalDistribution forward(const PolicyParams& params, const Task& task,
                                const FeatureVector& features) {
  check_features(params, features);
  const auto& head = params.head(task);
  CategoricalDistribution dist;
  dist.task = task;
  dist.logits = head.weight * trunk(params, features) + head.bias;
  if (!dist.logits.allFinite()) throw NumericError("non-finite logits for " + task.name());
  const double max_logit = dist.logits.maxCoeff();
  const double lse = max_logit + std::log((dist.logits.array() - max_logit).exp().sum());
  dist.log_probs = dist.logits.array() - lse;
  dist.probs = dist.log_probs.array().exp();
  if (!dist.log_probs.allFinite() || !std::isfinite(lse))
    throw NumericError("non-finite log-probabilities for " + task.name());
  return dist;
}

double log_prob(const CategoricalDistribution& dist, const ActionSpace& space, double action) {
  if (!(space.task() == dist.task) || static_cast<Eigen::Index>(space.size()) != dist.probs.size())
    throw ArgumentError("action space does not match distribution");
  return dist.log_probs[static_cast<Eigen::Index>(space.index_of(action))];
}

std::size_t greedy_action(const CategoricalDistribution& dist) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < dist.logits.size(); ++i)
    if (dist.logits[i] > dist.logits[best]) best = i;
  return static_cast<std::size_t>(best);
}

std::vector<SampledAction> sample_group(const PolicyParams& params, const Task& task,
                                        const FeatureVector& features, std::size_t group_size,
                                        Rng& rng) {
  if (group_size < 2) throw ArgumentError("group size must be at least 2");
  const auto dist = forward(params, task, features);
  const auto& space = params.head(task).space;
  std::vector<SampledAction> group;
  group.reserve(group_size);
  for (std::size_t g = 0; g < group_size; ++g) {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    Eigen::Index chosen = -1;
    for (Eigen::Index i = 0; i < dist.probs.size(); ++i) {
      if (dist.probs[i] <= 0.0) continue;
      chosen = i;  // last action with mass absorbs rounding
      cumulative += dist.probs[i];
      if (u < cumulative) break;
    }
    const auto a = static_cast<std::size_t>(chosen);
    group.push_back({a, space.value(a), dist.log_probs[chosen]});
  }
  return group;
}

PolicyParams backprop_logits(const PolicyParams& params, const Task& task,
                             const FeatureVector& features, const Eigen::VectorXd& dlogits) {
  check_features(params, features);
  const auto h_index = params.head_index(task);
  const auto& head = params.heads[h_index];
  if (dlogits.size() != head.bias.size()) throw ArgumentError("dlogits has wrong length");
  PolicyParams grad = params.zeros_like();
  const Eigen::VectorXd hidden = trunk(params, features);
  grad.heads[h_index].weight = dlogits * hidden.transpose();
  grad.heads[h_index].bias = dlogits;
  if (params.hidden_width() > 0) {
    const Eigen::VectorXd dpre =
        ((head.weight.transpose() * dlogits).array() * (1.0 - hidden.array().square())).matrix();
    grad.hidden_weight = dpre * features.transpose();
    grad.hidden_bias = dpre;
  }
  return grad;
}

PolicyParams grad_log_prob(const PolicyParams& params, const Task& task,
                           const FeatureVector& features, std::size_t action_index) {
  const auto dist = forward(params, task, features);
  if (action_index >= static_cast<std::size_t>(dist.probs.size()))
    throw ArgumentError("action index out of range");
  Eigen::VectorXd dlogits = -dist.probs;
  dlogits[static_cast<Eigen::Index>(action_index)] += 1.0;
  return backprop_logits(params, task, features, dlogits);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'D', 'R', '1', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ParseError("checkpoint truncated");
    bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

void put_string(std::ostream& out, std::string_view s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > 4096) throw ParseError("checkpoint string too long");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw ParseError("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const PolicyParams& params) {
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_string(out, profile_name(params.profile()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.feature_dim()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.hidden_width()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.heads.size()));
  for (const auto& head : params.heads) {
    put_string(out, head.space.task().name());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(head.space.size()));
    for (double a : head.space.actions()) put_le<double>(out, a);
  }
  const auto flat = params.flatten();
  put_le<std::uint64_t>(out, flat.size());
  for (double v : flat) put_le<double>(out, v);
}

PolicyParams read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kMagic))
    throw ParseError("not a checkpoint (bad magic)");
  if (const auto version = get_le<std::uint32_t>(in); version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto profile = parse_profile(get_string(in));
  if (!profile) throw ParseError("checkpoint names an unknown profile");
  const auto feature_dim = get_le<std::uint32_t>(in);
  const auto hidden_width = get_le<std::uint32_t>(in);
  const auto n_heads = get_le<std::uint32_t>(in);
  std::vector<ActionSpace> spaces;
  for (std::uint32_t h = 0; h < n_heads; ++h) {
    const auto task = Task::parse(get_string(in));
    if (!task) throw ParseError("checkpoint names an unknown task");
    const auto n = get_le<std::uint32_t>(in);
    std::vector<double> actions(n);
    for (auto& a : actions) a = get_le<double>(in);
    try {
      spaces.emplace_back(*task, std::move(actions));
    } catch (const ArgumentError& e) {
      throw ParseError(std::string{"checkpoint action space: "} + e.what());
    }
  }
  PolicyParams params{*profile, feature_dim, hidden_width, std::move(spaces)};
  const auto count = get_le<std::uint64_t>(in);
  if (count != params.parameter_count()) throw ParseError("checkpoint parameter count mismatch");
  std::vector<double> flat(count);
  for (auto& v : flat) v = get_le<double>(in);
  params.assign(flat);
  return params;
}

}  // namespace dr1
