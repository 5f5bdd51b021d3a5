#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "dementia_r1/clinical_index.hpp"

using namespace dr1;

namespace {

const ClinicalIndex kAll[] = {
    ClinicalIndex::ADAS11, ClinicalIndex::ADAS13,    ClinicalIndex::ADASQ4,
    ClinicalIndex::CDR,    ClinicalIndex::CDRSB,     ClinicalIndex::GDS,
    ClinicalIndex::LDELTOTAL, ClinicalIndex::MMSE, ClinicalIndex::RAVLT_learning,
};

}  // namespace

TEST_CASE("names round-trip") {
  for (auto idx : kAll) CHECK(parse_index(index_name(idx)) == idx);
  CHECK_FALSE(parse_index("ABETA"));
  CHECK(parse_profile("amc") == Profile::Amc);
  CHECK(parse_profile("adni") == Profile::Adni);
  CHECK_FALSE(parse_profile("AMC"));
}

TEST_CASE("declared ranges") {
  const std::map<ClinicalIndex, std::pair<double, double>> expected{
      {ClinicalIndex::MMSE, {0, 30}},   {ClinicalIndex::GDS, {1, 7}},
      {ClinicalIndex::CDR, {0, 3}},     {ClinicalIndex::CDRSB, {0, 18}},
      {ClinicalIndex::ADAS11, {0, 70}}, {ClinicalIndex::ADAS13, {0, 85}},
      {ClinicalIndex::ADASQ4, {0, 10}}, {ClinicalIndex::RAVLT_learning, {-20, 20}},
      {ClinicalIndex::LDELTOTAL, {0, 25}},
  };
  for (const auto& [idx, r] : expected) {
    CAPTURE(index_name(idx));
    CHECK(index_range(idx).lo == r.first);
    CHECK(index_range(idx).hi == r.second);
  }
}

TEST_CASE("grids") {
  CHECK(index_grid(ClinicalIndex::CDR) == std::vector<double>{0, 0.5, 1, 2, 3});
  CHECK(index_grid(ClinicalIndex::MMSE).size() == 31);
  CHECK(index_grid(ClinicalIndex::GDS).size() == 7);
  CHECK(index_grid(ClinicalIndex::CDRSB).size() == 37);
  CHECK(index_grid(ClinicalIndex::RAVLT_learning).size() == 41);
  for (auto idx : kAll) {
    const auto& g = index_grid(idx);
    CHECK(std::is_sorted(g.begin(), g.end()));
    CHECK(g.front() == index_range(idx).lo);
    CHECK(g.back() == index_range(idx).hi);
  }
}

TEST_CASE("snap_to_grid") {
  CHECK(snap_to_grid(ClinicalIndex::CDR, 1.4) == 1.0);
  CHECK(snap_to_grid(ClinicalIndex::CDR, 1.6) == 2.0);
  CHECK(snap_to_grid(ClinicalIndex::CDR, 0.25) == 0.0);
  CHECK(snap_to_grid(ClinicalIndex::MMSE, 31.7) == 30.0);
  CHECK(snap_to_grid(ClinicalIndex::MMSE, -2.0) == 0.0);
  CHECK(snap_to_grid(ClinicalIndex::CDRSB, 2.3) == 2.5);
}

TEST_CASE("profile indices") {
  const auto amc = profile_indices(Profile::Amc);
  CHECK(std::vector<ClinicalIndex>(amc.begin(), amc.end()) ==
        std::vector<ClinicalIndex>{ClinicalIndex::CDR, ClinicalIndex::GDS, ClinicalIndex::MMSE});
  CHECK(profile_indices(Profile::Adni).size() == 7);
}

TEST_CASE("tasks") {
  const auto d = Task::diagnosis();
  const auto m = Task::forecast(ClinicalIndex::MMSE);
  CHECK(d.is_diagnosis());
  CHECK(d.name() == "diagnosis");
  CHECK(m.name() == "MMSE");
  CHECK(Task::parse("MMSE") == m);
  CHECK(Task::parse("diagnosis") == d);
  CHECK_FALSE(Task::parse("x"));
  CHECK(m < d);
  CHECK(Task::forecast(ClinicalIndex::CDR) < m);
  CHECK_FALSE(d < d);
}
