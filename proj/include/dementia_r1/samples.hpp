#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dementia_r1/clinical_index.hpp"
#include "dementia_r1/cohort.hpp"
#include "dementia_r1/dates.hpp"

namespace dr1 {

enum class Stage : std::uint8_t { Stage1, Stage2 };

std::string_view stage_name(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

struct LongitudinalSample {
  std::string sample_id;
  std::string patient_id;
  // Linearized visits strictly before the anchor, one per line.
  std::string prompt_text;
  Date anchor_date;
  Stage stage = Stage::Stage1;
  Task task = Task::diagnosis();
  double target = 0.0;  // index value, or 0/1 for diagnosis
  double gap_months = 0.0;
  std::string gap_bucket;
};

enum class GapSchemeId : std::uint8_t { Stage1Amc, Stage1Adni, Stage2Amc, Stage2Adni };

std::string_view gap_scheme_name(GapSchemeId id);

// Half-open month intervals [b_i, b_{i+1}) starting at 0, plus an overflow
// label for gaps at or beyond the last boundary.
class GapScheme {
 public:
  // Throws ArgumentError unless boundaries start at 0 and strictly increase.
  GapScheme(GapSchemeId id, std::vector<double> boundaries, std::string overflow_label);

  static GapScheme standard(GapSchemeId id);
  static GapScheme stage1(Profile profile);
  static GapScheme stage2(Profile profile);

  GapSchemeId id() const { return id_; }
  const std::vector<double>& boundaries() const { return boundaries_; }
  const std::string& overflow_label() const { return overflow_label_; }

  // Every label in interval order, overflow last.
  std::vector<std::string> labels() const;

  // Throws ArgumentError for negative or non-finite gaps.
  std::string assign(double gap_months) const;

 private:
  GapSchemeId id_;
  std::vector<double> boundaries_;
  std::string overflow_label_;
};

std::string assign_gap_bucket(double gap_months, const GapScheme& scheme);

// "YYYY-MM-DD: <<<VISIT k/n>>> KEY: value, KEY: value" with keys in
// alphabetical order and missing observations omitted.
std::string linearize_visit(const Visit& visit, std::size_t ordinal, std::size_t total);

// Visits joined by newlines in the given (chronological) order.
std::string linearize_history(std::span<const Visit> visits);

// One sample per (patient, anchor visit j >= 1 observing the task, task).
std::vector<LongitudinalSample> build_stage1_samples(const Cohort& cohort, const GapScheme& scheme,
                                                     std::span<const ClinicalIndex> tasks);

struct Stage2Options {
  // History keeps visits at least this many months before the anchor (and
  // always strictly before it).
  double history_cutoff_months = 6.0;
  // Samples whose last included visit is closer than this are dropped.
  double min_gap_months = 6.0;
};

// One diagnosis sample per patient anchored at the last visit.
std::vector<LongitudinalSample> build_stage2_samples(const Cohort& cohort, const GapScheme& scheme,
                                                     const Stage2Options& options = {});

using LengthFn = std::function<std::size_t(std::string_view)>;

std::size_t whitespace_token_count(std::string_view text);

struct LengthFilterResult {
  std::vector<LongitudinalSample> kept;
  std::vector<LongitudinalSample> removed;
};

// Keeps samples with length_fn(prompt_text) <= max_units.
LengthFilterResult filter_by_length(std::vector<LongitudinalSample> samples,
                                    std::size_t max_units = 8000,
                                    const LengthFn& length_fn = whitespace_token_count);

struct BalancingRecord {
  std::size_t positives_before = 0;
  std::size_t negatives_before = 0;
  std::size_t positives_after = 0;
  std::size_t negatives_after = 0;
};

struct SplitManifest {
  Stage stage = Stage::Stage1;
  std::set<std::string> train_patient_ids;
  std::set<std::string> test_patient_ids;
  std::vector<std::string> train_samples;
  std::vector<std::string> test_samples;
  std::optional<BalancingRecord> balancing;
};

// Patients are shuffled with `seed` and the first round(test_ratio * n)
// become test patients; samples follow their patient.
SplitManifest split_patients(std::span<const LongitudinalSample> samples, double test_ratio,
                             std::uint64_t seed);

struct BalanceResult {
  std::vector<LongitudinalSample> samples;  // input order preserved
  BalancingRecord record;
};

// Downsamples the majority class to the minority count. Throws
// BalancingError when either class is empty.
BalanceResult balance_training(std::span<const LongitudinalSample> train, std::uint64_t seed);

struct LeakageReport {
  std::vector<std::string> stage2_test_in_stage1;
  std::vector<std::string> stage2_test_in_stage2_train;
  std::vector<std::string> stage1_train_in_stage1_test;
  std::vector<std::string> misassigned_samples;
  std::vector<std::string> future_dated_samples;

  bool passed() const;
  std::string summary() const;
};

// Checks patient isolation across and within stages, manifest consistency,
// and that no prompt mentions a date on or after its anchor.
LeakageReport audit_leakage(const SplitManifest& stage1, const SplitManifest& stage2,
                            std::span<const LongitudinalSample> samples);

struct DatasetConfig {
  double test_ratio = 0.20;
  std::size_t max_len = 8000;
  Stage2Options stage2;
  // 0 keeps the whole Stage-1 test split; otherwise a seeded subsample.
  std::size_t stage1_test_limit = 0;
  std::uint64_t seed = 0;
};

struct PreparedData {
  Profile profile = Profile::Amc;
  std::vector<LongitudinalSample> stage1_samples;
  std::vector<LongitudinalSample> stage2_samples;
  SplitManifest stage1;
  SplitManifest stage2;
  std::size_t stage1_removed_by_length = 0;
  std::size_t stage2_removed_by_length = 0;
  std::size_t stage1_removed_holdout = 0;  // Stage-2 test patients
  LeakageReport audit;

  std::vector<LongitudinalSample> stage1_train() const;
  std::vector<LongitudinalSample> stage1_test() const;
  std::vector<LongitudinalSample> stage2_train() const;  // balanced
  std::vector<LongitudinalSample> stage2_test() const;   // natural prevalence
};

// The full protocol: Stage-2 split and balancing first, then Stage-1 samples
// with every Stage-2 test patient removed, then the audit.
PreparedData prepare_datasets(const Cohort& cohort, const DatasetConfig& config);

std::vector<LongitudinalSample> select_samples(std::span<const LongitudinalSample> samples,
                                               std::span<const std::string> ids);

// Line-delimited JSON records {sample_id, patient_id, stage, task,
// prompt_text, anchor_date, target, gap_months, gap_bucket}.
void write_samples(std::ostream& out, std::span<const LongitudinalSample> samples);
std::vector<LongitudinalSample> read_samples(std::istream& in);

void write_manifest(std::ostream& out, const SplitManifest& manifest);
SplitManifest read_manifest(std::istream& in);

void write_audit(std::ostream& out, const LeakageReport& report);

}  // namespace dr1
