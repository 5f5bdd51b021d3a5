#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dementia_r1/clinical_index.hpp"
#include "dementia_r1/dates.hpp"
#include "dementia_r1/random.hpp"

namespace dr1 {

// Latent severity on a 7-level scale mirroring GDS stages 1..7.
inline constexpr int kMaxLevel = 6;
// First latent level whose zero-noise CDR is >= 1.
inline constexpr int kDementiaLevel = 3;

struct SeverityState {
  int level = 0;       // [0, kMaxLevel]
  double drift = 0.0;  // monthly decline propensity, [0, 1]
};

struct Visit {
  Date date;
  std::map<ClinicalIndex, double> observations;
};

struct Patient {
  std::string patient_id;
  std::vector<Visit> visits;  // strictly increasing dates
  int final_label = 0;        // 1 = dementia at the last visit
  // Latent state at each visit. Generator-internal; not serialized.
  std::vector<SeverityState> trajectory;
};

struct Cohort {
  Profile profile = Profile::Amc;
  std::vector<Patient> patients;
};

struct CohortConfig {
  std::size_t n_patients = 2000;
  Profile profile = Profile::Amc;
  int min_gap_months = 1;
  int max_gap_months = 6;
  int min_visits = 3;
  int max_visits = 10;
  // Initial latent level is uniform on [0, max_initial_level].
  int max_initial_level = 3;
  // Per-patient drift is uniform on [0, max_drift].
  double max_drift = 0.1;
  // Monthly probability that severity improves by one level.
  double fluctuation_prob = 0.02;
  // Multiplier on each index's unit noise; per-index overrides replace the
  // product for that index.
  double noise_scale = 1.0;
  std::map<ClinicalIndex, double> noise_override;
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

// Monthly latent transition. With u ~ U[0,1): u < fluctuation_prob improves
// by one level; otherwise decline happens with probability drift; the result
// is clamped to [0, kMaxLevel].
SeverityState latent_step(SeverityState state, double fluctuation_prob, Rng& rng);

// Noise-free value of an index at a latent level. MMSE falls from 30 at
// level 0; GDS = level + 1; CDR follows {0, 0, 0.5, 1, 1, 2, 3}.
double zero_noise_value(ClinicalIndex index, int level);

// Standard deviation of one unit of observation noise for an index.
double unit_noise(ClinicalIndex index);

Visit emit_visit(const SeverityState& state, const Date& date, Profile profile,
                 double noise_scale, Rng& rng,
                 const std::map<ClinicalIndex, double>& noise_override = {});

int label_for_level(int level);

Cohort generate_cohort(const CohortConfig& config);

// Exact probability that a generated patient has final_label = 1, obtained
// by propagating the monthly Markov chain over the visit-count and gap
// distributions and integrating the drift with composite Gauss-Legendre
// quadrature.
double expected_prevalence(const CohortConfig& config);

// Line-delimited JSON, one patient per line:
// {"patient_id", "final_label", "visits": [{"date", "observations"}]}.
void write_cohort(std::ostream& out, const Cohort& cohort);
// Throws ParseError naming the offending line.
Cohort read_cohort(std::istream& in, Profile profile);

}  // namespace dr1
