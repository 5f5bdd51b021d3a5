#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "dementia_r1/clinical_index.hpp"

namespace dr1 {

// Tolerance-aware reward: 1 iff |predicted - truth| <= delta (inclusive).
int r_cold(double predicted, double truth, double delta);

// Exact-match reward for binary labels.
int r_task(int predicted_label, int true_label);

struct ToleranceEntry {
  double range_lo = 0.0;
  double range_hi = 0.0;
  double delta = 0.0;
};

class ToleranceProfile {
 public:
  // MMSE +-2, GDS and CDR exact.
  static ToleranceProfile amc();
  // MMSE +-2, CDRSB +-1, ADAS11 +-5, ADAS13 +-6, ADASQ4 +-1, RAVLT_learning +-3,
  // LDELTOTAL +-2.
  static ToleranceProfile adni();
  static ToleranceProfile for_profile(Profile profile);

  // Lines of the form `NAME = range_lo, range_hi, delta`; '#' starts a
  // comment. Throws ParseError on malformed lines and ConfigError on
  // entries violating delta >= 0 or range_lo < range_hi.
  static ToleranceProfile load(std::istream& in);

  void set(const std::string& index_name, ToleranceEntry entry);
  const ToleranceEntry& entry(std::string_view index_name) const;
  bool contains(std::string_view index_name) const;
  const std::map<std::string, ToleranceEntry, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, ToleranceEntry, std::less<>> entries_;
};

// Throws LookupError for indices absent from the profile.
double tolerance_for(std::string_view index_name, const ToleranceProfile& profile);

struct ParsedAnswer {
  double value = 0.0;
  std::string raw_span;  // the full \boxed{...} text
};

// Numeric content of the first \boxed{...} inside <answer>...</answer>.
// nullopt when the block, the box, or a numeric payload is missing.
std::optional<ParsedAnswer> parse_boxed_answer(std::string_view completion);

// Canonical completion for a single-value answer; parse_boxed_answer
// recovers `value` exactly.
std::string format_completion(double value);

}  // namespace dr1
