#include "dementia_r1/samples.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dementia_r1/errors.hpp"
#include "dementia_r1/random.hpp"
#include "dementia_r1/text.hpp"

namespace dr1 {

std::string_view stage_name(Stage stage) { return stage == Stage::Stage1 ? "stage1" : "stage2"; }

std::optional<Stage> parse_stage(std::string_view name) {
  if (name == "stage1") return Stage::Stage1;
  if (name == "stage2") return Stage::Stage2;
  return std::nullopt;
}

std::string_view gap_scheme_name(GapSchemeId id) {
  switch (id) {
    case GapSchemeId::Stage1Amc: return "stage1_amc";
    case GapSchemeId::Stage1Adni: return "stage1_adni";
    case GapSchemeId::Stage2Amc: return "stage2_amc";
    case GapSchemeId::Stage2Adni: return "stage2_adni";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Gap buckets

GapScheme::GapScheme(GapSchemeId id, std::vector<double> boundaries, std::string overflow_label)
    : id_(id), boundaries_(std::move(boundaries)), overflow_label_(std::move(overflow_label)) {
  if (boundaries_.empty() || boundaries_.front() != 0.0)
    throw ArgumentError("gap scheme boundaries must start at 0");
  for (std::size_t i = 1; i < boundaries_.size(); ++i)
    if (!(boundaries_[i] > boundaries_[i - 1]))
      throw ArgumentError("gap scheme boundaries must be strictly increasing");
}

GapScheme GapScheme::standard(GapSchemeId id) {
  auto monthly = [](int last) {
    std::vector<double> b;
    for (int m = 0; m <= last; ++m) b.push_back(m);
    return b;
  };
  switch (id) {
    case GapSchemeId::Stage1Amc: return GapScheme{id, monthly(24), ">24m"};
    case GapSchemeId::Stage1Adni: return GapScheme{id, monthly(6), ">6m"};
    case GapSchemeId::Stage2Amc:
    case GapSchemeId::Stage2Adni: return GapScheme{id, {0, 6, 12, 18, 24}, ">24m"};
  }
  throw ArgumentError("unknown gap scheme");
}

GapScheme GapScheme::stage1(Profile profile) {
  return standard(profile == Profile::Amc ? GapSchemeId::Stage1Amc : GapSchemeId::Stage1Adni);
}

GapScheme GapScheme::stage2(Profile profile) {
  return standard(profile == Profile::Amc ? GapSchemeId::Stage2Amc : GapSchemeId::Stage2Adni);
}

std::vector<std::string> GapScheme::labels() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 1 < boundaries_.size(); ++i)
    out.push_back(format_number(boundaries_[i]) + "-" + format_number(boundaries_[i + 1]) + "m");
  out.push_back(overflow_label_);
  return out;
}

std::string GapScheme::assign(double gap_months) const {
  if (!(gap_months >= 0.0) || !std::isfinite(gap_months))
    throw ArgumentError("gap_months must be finite and non-negative");
  for (std::size_t i = 0; i + 1 < boundaries_.size(); ++i)
    if (gap_months < boundaries_[i + 1])
      return format_number(boundaries_[i]) + "-" + format_number(boundaries_[i + 1]) + "m";
  return overflow_label_;
}

std::string assign_gap_bucket(double gap_months, const GapScheme& scheme) {
  return scheme.assign(gap_months);
}

// ---------------------------------------------------------------------------
// Linearization

std::string linearize_visit(const Visit& visit, std::size_t ordinal, std::size_t total) {
  std::string line = format_date(visit.date) + ": <<<VISIT " + std::to_string(ordinal) + "/" +
                     std::to_string(total) + ">>>";
  bool first = true;
  for (const auto& [index, value] : visit.observations) {
    line += first ? " " : ", ";
    first = false;
    line += index_name(index);
    line += ": ";
    line += format_number(value);
  }
  return line;
}

std::string linearize_history(std::span<const Visit> visits) {
  std::string text;
  for (std::size_t k = 0; k < visits.size(); ++k) {
    if (k > 0) text += '\n';
    text += linearize_visit(visits[k], k + 1, visits.size());
  }
  return text;
}

// ---------------------------------------------------------------------------
// Sample construction

std::vector<LongitudinalSample> build_stage1_samples(const Cohort& cohort, const GapScheme& scheme,
                                                     std::span<const ClinicalIndex> tasks) {
  std::vector<LongitudinalSample> samples;
  for (const auto& patient : cohort.patients) {
    for (std::size_t j = 1; j < patient.visits.size(); ++j) {
      const auto& anchor = patient.visits[j];
      const auto history = std::span<const Visit>(patient.visits).first(j);
      const double gap = months_between(history.back().date, anchor.date);
      std::string prompt;  // built lazily, shared across tasks
      for (ClinicalIndex index : tasks) {
        const auto it = anchor.observations.find(index);
        if (it == anchor.observations.end()) continue;
        if (prompt.empty()) prompt = linearize_history(history);
        LongitudinalSample s;
        s.sample_id = patient.patient_id + "/s1/" + std::string{index_name(index)} + "/" +
                      std::to_string(j);
        s.patient_id = patient.patient_id;
        s.prompt_text = prompt;
        s.anchor_date = anchor.date;
        s.stage = Stage::Stage1;
        s.task = Task::forecast(index);
        s.target = it->second;
        s.gap_months = gap;
        s.gap_bucket = scheme.assign(gap);
        samples.push_back(std::move(s));
      }
    }
  }
  return samples;
}

std::vector<LongitudinalSample> build_stage2_samples(const Cohort& cohort, const GapScheme& scheme,
                                                     const Stage2Options& options) {
  std::vector<LongitudinalSample> samples;
  for (const auto& patient : cohort.patients) {
    if (patient.visits.size() < 2) continue;
    const auto& anchor = patient.visits.back();
    std::size_t kept = 0;
    while (kept + 1 < patient.visits.size() &&
           months_between(patient.visits[kept].date, anchor.date) >= options.history_cutoff_months)
      ++kept;
    if (kept == 0) continue;
    const auto history = std::span<const Visit>(patient.visits).first(kept);
    const double gap = months_between(history.back().date, anchor.date);
    if (gap < options.min_gap_months) continue;
    LongitudinalSample s;
    s.sample_id = patient.patient_id + "/s2";
    s.patient_id = patient.patient_id;
    s.prompt_text = linearize_history(history);
    s.anchor_date = anchor.date;
    s.stage = Stage::Stage2;
    s.task = Task::diagnosis();
    s.target = patient.final_label;
    s.gap_months = gap;
    s.gap_bucket = scheme.assign(gap);
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Filtering, splitting, balancing

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

LengthFilterResult filter_by_length(std::vector<LongitudinalSample> samples, std::size_t max_units,
                                    const LengthFn& length_fn) {
  LengthFilterResult result;
  for (auto& s : samples) {
    if (length_fn(s.prompt_text) <= max_units)
      result.kept.push_back(std::move(s));
    else
      result.removed.push_back(std::move(s));
  }
  return result;
}

SplitManifest split_patients(std::span<const LongitudinalSample> samples, double test_ratio,
                             std::uint64_t seed) {
  if (!(test_ratio >= 0.0 && test_ratio <= 1.0))
    throw ArgumentError("test_ratio must lie in [0, 1]");
  std::set<std::string> unique;
  for (const auto& s : samples) unique.insert(s.patient_id);
  std::vector<std::string> patients(unique.begin(), unique.end());
  Rng rng{seed};
  shuffle_range(patients.begin(), patients.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_ratio * patients.size()));

  SplitManifest manifest;
  manifest.stage = samples.empty() ? Stage::Stage1 : samples.front().stage;
  for (std::size_t i = 0; i < patients.size(); ++i)
    (i < n_test ? manifest.test_patient_ids : manifest.train_patient_ids).insert(patients[i]);
  for (const auto& s : samples)
    (manifest.test_patient_ids.contains(s.patient_id) ? manifest.test_samples
                                                       : manifest.train_samples)
        .push_back(s.sample_id);
  return manifest;
}

BalanceResult balance_training(std::span<const LongitudinalSample> train, std::uint64_t seed) {
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].target != 0.0 && train[i].target != 1.0)
      throw ArgumentError("balancing requires binary targets");
    (train[i].target == 1.0 ? positives : negatives).push_back(i);
  }
  if (positives.empty() || negatives.empty())
    throw BalancingError("cannot balance: one class has zero samples");

  BalanceResult result;
  result.record.positives_before = positives.size();
  result.record.negatives_before = negatives.size();
  auto& majority = positives.size() > negatives.size() ? positives : negatives;
  const std::size_t target = std::min(positives.size(), negatives.size());
  Rng rng{seed};
  shuffle_range(majority.begin(), majority.end(), rng);
  majority.resize(target);

  std::vector<bool> keep(train.size(), false);
  for (auto i : positives) keep[i] = true;
  for (auto i : negatives) keep[i] = true;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (keep[i]) result.samples.push_back(train[i]);
  result.record.positives_after = target;
  result.record.negatives_after = target;
  return result;
}

// ---------------------------------------------------------------------------
// Leakage audit

bool LeakageReport::passed() const {
  return stage2_test_in_stage1.empty() && stage2_test_in_stage2_train.empty() &&
         stage1_train_in_stage1_test.empty() && misassigned_samples.empty() &&
         future_dated_samples.empty();
}

std::string LeakageReport::summary() const {
  std::ostringstream out;
  out << "stage2-test patients in stage1: " << stage2_test_in_stage1.size() << '\n'
      << "stage2-test patients in stage2-train: " << stage2_test_in_stage2_train.size() << '\n'
      << "stage1-train patients in stage1-test: " << stage1_train_in_stage1_test.size() << '\n'
      << "samples on the wrong side of their patient: " << misassigned_samples.size() << '\n'
      << "prompts with dates on/after anchor: " << future_dated_samples.size() << '\n'
      << (passed() ? "PASS" : "FAIL") << '\n';
  return out.str();
}

namespace {

std::vector<std::string> intersect(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::vector<std::string> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool mentions_date_on_or_after(std::string_view text, const Date& anchor) {
  for (std::size_t i = 0; i + 10 <= text.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
    if (const auto date = parse_date(text.substr(i, 10)); date && !(*date < anchor)) return true;
  }
  return false;
}

}  // namespace

LeakageReport audit_leakage(const SplitManifest& stage1, const SplitManifest& stage2,
                            std::span<const LongitudinalSample> samples) {
  LeakageReport report;
  std::set<std::string> stage1_all = stage1.train_patient_ids;
  stage1_all.insert(stage1.test_patient_ids.begin(), stage1.test_patient_ids.end());
  report.stage2_test_in_stage1 = intersect(stage2.test_patient_ids, stage1_all);
  report.stage2_test_in_stage2_train = intersect(stage2.test_patient_ids, stage2.train_patient_ids);
  report.stage1_train_in_stage1_test = intersect(stage1.train_patient_ids, stage1.test_patient_ids);

  std::map<std::string_view, const LongitudinalSample*> by_id;
  for (const auto& s : samples) by_id.emplace(s.sample_id, &s);
  auto check_side = [&](const std::vector<std::string>& ids, const std::set<std::string>& side) {
    for (const auto& id : ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end() || !side.contains(it->second->patient_id))
        report.misassigned_samples.push_back(id);
    }
  };
  check_side(stage1.train_samples, stage1.train_patient_ids);
  check_side(stage1.test_samples, stage1.test_patient_ids);
  check_side(stage2.train_samples, stage2.train_patient_ids);
  check_side(stage2.test_samples, stage2.test_patient_ids);

  for (const auto& s : samples)
    if (mentions_date_on_or_after(s.prompt_text, s.anchor_date))
      report.future_dated_samples.push_back(s.sample_id);
  return report;
}

// ---------------------------------------------------------------------------
// Protocol

std::vector<LongitudinalSample> select_samples(std::span<const LongitudinalSample> samples,
                                               std::span<const std::string> ids) {
  std::map<std::string_view, const LongitudinalSample*> by_id;
  for (const auto& s : samples) by_id.emplace(s.sample_id, &s);
  std::vector<LongitudinalSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw LookupError("unknown sample id " + id);
    out.push_back(*it->second);
  }
  return out;
}

std::vector<LongitudinalSample> PreparedData::stage1_train() const {
  return select_samples(stage1_samples, stage1.train_samples);
}
std::vector<LongitudinalSample> PreparedData::stage1_test() const {
  return select_samples(stage1_samples, stage1.test_samples);
}
std::vector<LongitudinalSample> PreparedData::stage2_train() const {
  return select_samples(stage2_samples, stage2.train_samples);
}
std::vector<LongitudinalSample> PreparedData::stage2_test() const {
  return select_samples(stage2_samples, stage2.test_samples);
}

PreparedData prepare_datasets(const Cohort& cohort, const DatasetConfig& config) {
  PreparedData data;
  data.profile = cohort.profile;

  auto stage2 = filter_by_length(
      build_stage2_samples(cohort, GapScheme::stage2(cohort.profile), config.stage2),
      config.max_len);
  data.stage2_removed_by_length = stage2.removed.size();
  data.stage2_samples = std::move(stage2.kept);
  data.stage2 = split_patients(data.stage2_samples, config.test_ratio,
                               derive_seed(config.seed, "stage2-split"));
  data.stage2.stage = Stage::Stage2;
  {
    const auto balanced = balance_training(data.stage2_train(),
                                           derive_seed(config.seed, "stage2-balance"));
    data.stage2.balancing = balanced.record;
    data.stage2.train_samples.clear();
    for (const auto& s : balanced.samples) data.stage2.train_samples.push_back(s.sample_id);
  }

  auto stage1 = filter_by_length(
      build_stage1_samples(cohort, GapScheme::stage1(cohort.profile),
                           profile_indices(cohort.profile)),
      config.max_len);
  data.stage1_removed_by_length = stage1.removed.size();
  for (auto& s : stage1.kept) {
    if (data.stage2.test_patient_ids.contains(s.patient_id))
      ++data.stage1_removed_holdout;
    else
      data.stage1_samples.push_back(std::move(s));
  }
  data.stage1 = split_patients(data.stage1_samples, config.test_ratio,
                               derive_seed(config.seed, "stage1-split"));
  data.stage1.stage = Stage::Stage1;
  if (config.stage1_test_limit > 0 && data.stage1.test_samples.size() > config.stage1_test_limit) {
    auto& ids = data.stage1.test_samples;
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng{derive_seed(config.seed, "stage1-test-subsample")};
    shuffle_range(order.begin(), order.end(), rng);
    order.resize(config.stage1_test_limit);
    std::sort(order.begin(), order.end());
    std::vector<std::string> kept;
    for (auto i : order) kept.push_back(ids[i]);
    ids = std::move(kept);
  }

  std::vector<LongitudinalSample> all = data.stage1_samples;
  all.insert(all.end(), data.stage2_samples.begin(), data.stage2_samples.end());
  data.audit = audit_leakage(data.stage1, data.stage2, all);
  return data;
}

// ---------------------------------------------------------------------------
// Files

void write_samples(std::ostream& out, std::span<const LongitudinalSample> samples) {
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["sample_id"] = s.sample_id;
    j["patient_id"] = s.patient_id;
    j["stage"] = stage_name(s.stage);
    j["task"] = s.task.name();
    j["prompt_text"] = s.prompt_text;
    j["anchor_date"] = format_date(s.anchor_date);
    j["target"] = s.target;
    j["gap_months"] = s.gap_months;
    j["gap_bucket"] = s.gap_bucket;
    out << j.dump() << '\n';
  }
}

std::vector<LongitudinalSample> read_samples(std::istream& in) {
  std::vector<LongitudinalSample> samples;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    auto fail = [&](const std::string& why) {
      return ParseError("sample line " + std::to_string(line_no) + ": " + why);
    };
    try {
      const auto j = nlohmann::json::parse(text);
      LongitudinalSample s;
      s.sample_id = j.at("sample_id").get<std::string>();
      s.patient_id = j.at("patient_id").get<std::string>();
      const auto stage = parse_stage(j.at("stage").get<std::string>());
      const auto task = Task::parse(j.at("task").get<std::string>());
      const auto anchor = parse_date(j.at("anchor_date").get<std::string>());
      if (!stage || !task || !anchor) throw fail("bad stage, task or anchor_date");
      s.stage = *stage;
      s.task = *task;
      s.anchor_date = *anchor;
      s.prompt_text = j.at("prompt_text").get<std::string>();
      s.target = j.at("target").get<double>();
      s.gap_months = j.at("gap_months").get<double>();
      s.gap_bucket = j.at("gap_bucket").get<std::string>();
      samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
  }
  return samples;
}

void write_manifest(std::ostream& out, const SplitManifest& m) {
  nlohmann::ordered_json j;
  j["stage"] = stage_name(m.stage);
  j["train_ids"] = m.train_patient_ids;
  j["test_ids"] = m.test_patient_ids;
  j["train_samples"] = m.train_samples;
  j["test_samples"] = m.test_samples;
  if (m.balancing) {
    j["balancing_record"] = {{"positives_before", m.balancing->positives_before},
                             {"negatives_before", m.balancing->negatives_before},
                             {"positives_after", m.balancing->positives_after},
                             {"negatives_after", m.balancing->negatives_after}};
  } else {
    j["balancing_record"] = nullptr;
  }
  out << j.dump(2) << '\n';
}

SplitManifest read_manifest(std::istream& in) {
  try {
    const auto j = nlohmann::json::parse(in);
    SplitManifest m;
    const auto stage = parse_stage(j.at("stage").get<std::string>());
    if (!stage) throw ParseError("manifest: bad stage");
    m.stage = *stage;
    m.train_patient_ids = j.at("train_ids").get<std::set<std::string>>();
    m.test_patient_ids = j.at("test_ids").get<std::set<std::string>>();
    m.train_samples = j.at("train_samples").get<std::vector<std::string>>();
    m.test_samples = j.at("test_samples").get<std::vector<std::string>>();
    if (const auto& b = j.at("balancing_record"); !b.is_null()) {
      m.balancing = BalancingRecord{b.at("positives_before").get<std::size_t>(),
                                    b.at("negatives_before").get<std::size_t>(),
                                    b.at("positives_after").get<std::size_t>(),
                                    b.at("negatives_after").get<std::size_t>()};
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string{"manifest: "} + e.what());
  }
}

void write_audit(std::ostream& out, const LeakageReport& r) {
  nlohmann::ordered_json j;
  j["passed"] = r.passed();
  j["stage2_test_in_stage1"] = r.stage2_test_in_stage1;
  j["stage2_test_in_stage2_train"] = r.stage2_test_in_stage2_train;
  j["stage1_train_in_stage1_test"] = r.stage1_train_in_stage1_test;
  j["misassigned_samples"] = r.misassigned_samples;
  j["future_dated_samples"] = r.future_dated_samples;
  out << j.dump(2) << '\n';
}

}  // namespace dr1
