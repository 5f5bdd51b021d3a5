#include "dementia_r1/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dementia_r1/errors.hpp"
#include "dementia_r1/reward.hpp"

namespace dr1 {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  const auto total = c.total();
  if (total > 0) r.accuracy = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
  double p = 0.0, q = 0.0;
  if (c.tp + c.fp > 0)
    p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  else
    r.precision_undefined = true;
  if (c.tp + c.fn > 0)
    q = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  else
    r.recall_undefined = true;
  r.precision = 100.0 * p;
  r.recall = 100.0 * q;
  r.f1 = p + q > 0.0 ? 100.0 * 2.0 * p * q / (p + q) : 0.0;
  return r;
}

MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw ArgumentError("metrics need at least one prediction");
  if (predictions.size() != labels.size())
    throw ArgumentError("predictions and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw ArgumentError("labels must be binary");
    if (p == 1 && y == 1) ++c.tp;
    else if (p == 1) ++c.fp;
    else if (y == 1) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_counts(c);
}

double f1_from_precision_recall(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double index_accuracy(std::span<const double> predictions, std::span<const double> truths,
                      double delta) {
  if (predictions.empty()) throw ArgumentError("index accuracy needs at least one prediction");
  if (predictions.size() != truths.size())
    throw ArgumentError("predictions and truths differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    hits += static_cast<std::size_t>(r_cold(predictions[i], truths[i], delta));
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

MetricsReport stratify_by_bucket(std::span<const int> predictions,
                                 std::span<const LongitudinalSample> samples) {
  if (predictions.size() != samples.size())
    throw ArgumentError("each prediction needs a sample");
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(static_cast<int>(s.target));
  MetricsReport overall = compute_metrics(predictions, labels);

  struct Bucket {
    double min_gap;
    std::vector<int> preds, labels;
  };
  std::map<std::string, Bucket> buckets;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [it, inserted] = buckets.try_emplace(samples[i].gap_bucket, Bucket{samples[i].gap_months, {}, {}});
    it->second.min_gap = std::min(it->second.min_gap, samples[i].gap_months);
    it->second.preds.push_back(predictions[i]);
    it->second.labels.push_back(labels[i]);
  }
  for (auto& [label, bucket] : buckets)
    overall.strata.push_back({label, compute_metrics(bucket.preds, bucket.labels)});
  std::stable_sort(overall.strata.begin(), overall.strata.end(),
                   [&](const Stratum& a, const Stratum& b) {
                     return buckets.at(a.label).min_gap < buckets.at(b.label).min_gap;
                   });
  return overall;
}

namespace {

MetricSpread spread(std::span<const MetricsReport> reports, double MetricsReport::*field) {
  const double n = static_cast<double>(reports.size());
  // Sum in sorted order so the result does not depend on report order.
  std::vector<double> values;
  for (const auto& r : reports) values.push_back(r.*field);
  std::sort(values.begin(), values.end());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace

MetricsReport aggregate_seeds(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ArgumentError("aggregation needs at least one report");
  MetricsReport out;
  for (const auto& r : reports) out.counts += r.counts;
  SeedSpread s;
  s.accuracy = spread(reports, &MetricsReport::accuracy);
  s.precision = spread(reports, &MetricsReport::precision);
  s.recall = spread(reports, &MetricsReport::recall);
  s.f1 = spread(reports, &MetricsReport::f1);
  s.n_seeds = reports.size();
  out.accuracy = s.accuracy.mean;
  out.precision = s.precision.mean;
  out.recall = s.recall.mean;
  out.f1 = s.f1.mean;
  out.precision_undefined = std::any_of(reports.begin(), reports.end(),
                                        [](const auto& r) { return r.precision_undefined; });
  out.recall_undefined = std::any_of(reports.begin(), reports.end(),
                                     [](const auto& r) { return r.recall_undefined; });
  out.seeds = s;
  return out;
}

namespace {

std::string cell(double value, const std::optional<MetricSpread>& spread) {
  char buf[48];
  if (spread)
    std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", spread->mean, spread->std_dev);
  else
    std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

// Display width, counting the two-byte "±" as one column.
std::size_t width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

}  // namespace

std::string format_table(std::span<const std::pair<std::string, MetricsReport>> rows) {
  const std::vector<std::string> header{"Method", "Accuracy", "Precision", "Recall", "F1 score"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& [name, r] : rows) {
    auto get = [&](MetricSpread SeedSpread::*f) {
      return r.seeds ? std::optional<MetricSpread>{(*r.seeds).*f} : std::nullopt;
    };
    cells.push_back({name, cell(r.accuracy, get(&SeedSpread::accuracy)),
                     cell(r.precision, get(&SeedSpread::precision)),
                     cell(r.recall, get(&SeedSpread::recall)), cell(r.f1, get(&SeedSpread::f1))});
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const auto pad = std::string(widths[c] - width(cells[r][c]), ' ');
      out += c == 0 ? cells[r][c] + pad : "  " + pad + cells[r][c];
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w;
      out += std::string(total + 2 * (widths.size() - 1), '-') + '\n';
    }
  }
  return out;
}

namespace {

nlohmann::ordered_json record(const std::string& name, const std::string& stratum,
                              const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["method"] = name;
  j["stratum"] = stratum;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["tn"] = r.counts.tn;
  j["fn"] = r.counts.fn;
  j["precision_undefined"] = r.precision_undefined;
  j["recall_undefined"] = r.recall_undefined;
  if (r.seeds) {
    j["n_seeds"] = r.seeds->n_seeds;
    j["f1_std"] = r.seeds->f1.std_dev;
    j["accuracy_std"] = r.seeds->accuracy.std_dev;
    j["precision_std"] = r.seeds->precision.std_dev;
    j["recall_std"] = r.seeds->recall.std_dev;
  }
  return j;
}

}  // namespace

void write_report_records(std::ostream& out, const std::string& name, const MetricsReport& report) {
  out << record(name, "overall", report).dump() << '\n';
  for (const auto& s : report.strata) out << record(name, s.label, s.report).dump() << '\n';
}

}  // namespace dr1
