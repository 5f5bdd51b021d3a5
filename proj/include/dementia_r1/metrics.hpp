#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dementia_r1/samples.hpp"

namespace dr1 {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricSpread {
  double mean = 0.0;
  double std_dev = 0.0;  // population
};

struct SeedSpread {
  MetricSpread accuracy, precision, recall, f1;
  std::size_t n_seeds = 0;
};

struct Stratum;

// Metrics are percentages; label 1 is the positive class. A zero
// denominator reports 0 and raises the matching *_undefined flag.
struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
  bool precision_undefined = false;
  bool recall_undefined = false;
  std::vector<Stratum> strata;  // ordered by smallest gap in each bucket
  std::optional<SeedSpread> seeds;
};

struct Stratum {
  std::string label;
  MetricsReport report;
};

MetricsReport metrics_from_counts(const ConfusionCounts& counts);

// Throws ArgumentError on empty or unequal inputs, or non-binary values.
MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels);

// F1 (in percent) implied by precision and recall given in percent.
double f1_from_precision_recall(double precision, double recall);

// Percentage of pairs within delta (inclusive). Throws ArgumentError on
// empty or unequal inputs.
double index_accuracy(std::span<const double> predictions, std::span<const double> truths,
                      double delta);

// Overall report plus one stratum per gap bucket present in `samples`.
MetricsReport stratify_by_bucket(std::span<const int> predictions,
                                 std::span<const LongitudinalSample> samples);

// Means of each metric with population std; counts are summed. Throws
// ArgumentError on an empty list.
MetricsReport aggregate_seeds(std::span<const MetricsReport> reports);

// Aligned table with one row per method, cells "mean ± std" when a seed
// spread is present.
std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows);

// One JSON line for the overall report and one per stratum.
void write_report_records(std::ostream& out, const std::string& name, const MetricsReport& report);

}  // namespace dr1
