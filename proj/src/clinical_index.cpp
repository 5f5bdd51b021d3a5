#include "dementia_r1/clinical_index.hpp"

#include <array>
#include <cmath>

#include "dementia_r1/errors.hpp"

namespace dr1 {

namespace {

struct IndexInfo {
  ClinicalIndex index;
  std::string_view name;
  IndexRange range;
  double step;  // 0 marks an explicit grid
};

constexpr std::array<IndexInfo, 9> kIndexInfo{{
    {ClinicalIndex::ADAS11, "ADAS11", {0, 70}, 1.0},
    {ClinicalIndex::ADAS13, "ADAS13", {0, 85}, 1.0},
    {ClinicalIndex::ADASQ4, "ADASQ4", {0, 10}, 1.0},
    {ClinicalIndex::CDR, "CDR", {0, 3}, 0.0},
    {ClinicalIndex::CDRSB, "CDRSB", {0, 18}, 0.5},
    {ClinicalIndex::GDS, "GDS", {1, 7}, 1.0},
    {ClinicalIndex::LDELTOTAL, "LDELTOTAL", {0, 25}, 1.0},
    {ClinicalIndex::MMSE, "MMSE", {0, 30}, 1.0},
    {ClinicalIndex::RAVLT_learning, "RAVLT_learning", {-20, 20}, 1.0},
}};

constexpr std::array<ClinicalIndex, 3> kAmcIndices{ClinicalIndex::CDR, ClinicalIndex::GDS,
                                                   ClinicalIndex::MMSE};
constexpr std::array<ClinicalIndex, 7> kAdniIndices{
    ClinicalIndex::ADAS11,    ClinicalIndex::ADAS13, ClinicalIndex::ADASQ4,
    ClinicalIndex::CDRSB,     ClinicalIndex::LDELTOTAL, ClinicalIndex::MMSE,
    ClinicalIndex::RAVLT_learning};

const IndexInfo& info(ClinicalIndex index) {
  return kIndexInfo[static_cast<std::size_t>(index)];
}

std::vector<double> make_grid(const IndexInfo& item) {
  if (item.step == 0.0) return {0.0, 0.5, 1.0, 2.0, 3.0};
  std::vector<double> grid;
  const auto n = static_cast<int>(std::lround((item.range.hi - item.range.lo) / item.step));
  for (int i = 0; i <= n; ++i) grid.push_back(item.range.lo + i * item.step);
  return grid;
}

}  // namespace

std::string_view index_name(ClinicalIndex index) { return info(index).name; }

std::optional<ClinicalIndex> parse_index(std::string_view name) {
  for (const auto& item : kIndexInfo)
    if (item.name == name) return item.index;
  return std::nullopt;
}

std::string_view profile_name(Profile profile) {
  return profile == Profile::Amc ? "amc" : "adni";
}

std::optional<Profile> parse_profile(std::string_view name) {
  if (name == "amc") return Profile::Amc;
  if (name == "adni") return Profile::Adni;
  return std::nullopt;
}

std::span<const ClinicalIndex> profile_indices(Profile profile) {
  if (profile == Profile::Amc) return kAmcIndices;
  return kAdniIndices;
}

IndexRange index_range(ClinicalIndex index) { return info(index).range; }

const std::vector<double>& index_grid(ClinicalIndex index) {
  static const auto grids = [] {
    std::array<std::vector<double>, kIndexInfo.size()> out;
    for (std::size_t i = 0; i < kIndexInfo.size(); ++i) out[i] = make_grid(kIndexInfo[i]);
    return out;
  }();
  return grids[static_cast<std::size_t>(index)];
}

double snap_to_grid(ClinicalIndex index, double value) {
  const auto& grid = index_grid(index);
  double best = grid.front();
  for (double candidate : grid)
    if (std::abs(candidate - value) < std::abs(best - value)) best = candidate;
  return best;
}

ClinicalIndex Task::index() const {
  if (!index_) throw ArgumentError("diagnosis task has no clinical index");
  return *index_;
}

std::string Task::name() const {
  return is_diagnosis() ? std::string{"diagnosis"} : std::string{index_name(*index_)};
}

std::optional<Task> Task::parse(std::string_view name) {
  if (name == "diagnosis") return Task::diagnosis();
  if (auto index = parse_index(name)) return Task::forecast(*index);
  return std::nullopt;
}

}  // namespace dr1
