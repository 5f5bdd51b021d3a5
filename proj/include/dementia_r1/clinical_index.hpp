#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dr1 {

// Enumerators are declared in ASCII order of their names, so ordered
// containers keyed by ClinicalIndex iterate alphabetically.
enum class ClinicalIndex : std::uint8_t {
  ADAS11,
  ADAS13,
  ADASQ4,
  CDR,
  CDRSB,
  GDS,
  LDELTOTAL,
  MMSE,
  RAVLT_learning,
};

enum class Profile : std::uint8_t { Amc, Adni };

std::string_view index_name(ClinicalIndex index);
std::optional<ClinicalIndex> parse_index(std::string_view name);

std::string_view profile_name(Profile profile);
std::optional<Profile> parse_profile(std::string_view name);

// Indices observed at every visit of a profile, alphabetical.
std::span<const ClinicalIndex> profile_indices(Profile profile);

struct IndexRange {
  double lo;
  double hi;
};

IndexRange index_range(ClinicalIndex index);

// Admissible values of an index: CDR global {0, 0.5, 1, 2, 3}, CDR-SB in
// half-point steps, integer grids for the rest.
const std::vector<double>& index_grid(ClinicalIndex index);

// Nearest admissible value (ties resolve toward the lower value).
double snap_to_grid(ClinicalIndex index, double value);

// A prediction target: either a clinical index forecast or the binary
// dementia diagnosis.
class Task {
 public:
  static Task diagnosis() { return Task{}; }
  static Task forecast(ClinicalIndex index) { return Task{index}; }

  bool is_diagnosis() const { return !index_.has_value(); }
  ClinicalIndex index() const;
  std::string name() const;

  // Accepts index names and "diagnosis".
  static std::optional<Task> parse(std::string_view name);

  friend bool operator==(const Task&, const Task&) = default;
  friend bool operator<(const Task& a, const Task& b) {
    // Diagnosis sorts last.
    if (a.is_diagnosis() != b.is_diagnosis()) return b.is_diagnosis();
    return !a.is_diagnosis() && a.index() < b.index();
  }

 private:
  Task() = default;
  explicit Task(ClinicalIndex index) : index_(index) {}

  std::optional<ClinicalIndex> index_;
};

}  // namespace dr1
