#include "dementia_r1/cohort.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dementia_r1/errors.hpp"

namespace dr1 {

namespace {

using LevelTable = std::array<double, kMaxLevel + 1>;

const LevelTable& level_table(ClinicalIndex index) {
  static const LevelTable mmse{30, 28, 25, 21, 16, 10, 4};
  static const LevelTable gds{1, 2, 3, 4, 5, 6, 7};
  static const LevelTable cdr{0, 0, 0.5, 1, 1, 2, 3};
  static const LevelTable cdrsb{0, 0.5, 2, 4.5, 8, 12, 16};
  static const LevelTable adas11{5, 7, 11, 18, 27, 38, 50};
  static const LevelTable adas13{8, 11, 17, 27, 39, 52, 66};
  static const LevelTable adasq4{1, 2, 4, 6, 7, 9, 10};
  static const LevelTable ravlt{7, 6, 4, 3, 2, 1, 0};
  static const LevelTable ldeltotal{14, 11, 7, 4, 2, 1, 0};
  switch (index) {
    case ClinicalIndex::MMSE: return mmse;
    case ClinicalIndex::GDS: return gds;
    case ClinicalIndex::CDR: return cdr;
    case ClinicalIndex::CDRSB: return cdrsb;
    case ClinicalIndex::ADAS11: return adas11;
    case ClinicalIndex::ADAS13: return adas13;
    case ClinicalIndex::ADASQ4: return adasq4;
    case ClinicalIndex::RAVLT_learning: return ravlt;
    case ClinicalIndex::LDELTOTAL: return ldeltotal;
  }
  throw ArgumentError("unknown clinical index");
}

std::string make_patient_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "P%06zu", i);
  return buf;
}

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void CohortConfig::validate() const {
  if (min_gap_months < 1 || max_gap_months < min_gap_months)
    throw ConfigError("visit gap months must satisfy 1 <= min <= max");
  if (min_visits < 2 || max_visits < min_visits)
    throw ConfigError("visit counts must satisfy 2 <= min <= max");
  if (max_initial_level < 0 || max_initial_level > kMaxLevel)
    throw ConfigError("max_initial_level must lie in [0, 6]");
  if (!in_unit(max_drift)) throw ConfigError("max_drift must lie in [0, 1]");
  if (!in_unit(fluctuation_prob)) throw ConfigError("fluctuation_prob must lie in [0, 1]");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
    throw ConfigError("noise_scale must be finite and non-negative");
  for (const auto& [index, scale] : noise_override)
    if (!(scale >= 0.0) || !std::isfinite(scale))
      throw ConfigError("noise override for " + std::string{index_name(index)} +
                        " must be finite and non-negative");
}

SeverityState latent_step(SeverityState state, double fluctuation_prob, Rng& rng) {
  const double u = uniform01(rng);
  const double decline = (1.0 - fluctuation_prob) * state.drift;
  if (u < fluctuation_prob)
    state.level -= 1;
  else if (u < fluctuation_prob + decline)
    state.level += 1;
  state.level = std::clamp(state.level, 0, kMaxLevel);
  return state;
}

double zero_noise_value(ClinicalIndex index, int level) {
  return level_table(index)[static_cast<std::size_t>(std::clamp(level, 0, kMaxLevel))];
}

double unit_noise(ClinicalIndex index) {
  switch (index) {
    case ClinicalIndex::MMSE: return 1.5;
    case ClinicalIndex::GDS: return 0.4;
    case ClinicalIndex::CDR: return 0.25;
    case ClinicalIndex::CDRSB: return 0.75;
    case ClinicalIndex::ADAS11: return 2.5;
    case ClinicalIndex::ADAS13: return 3.0;
    case ClinicalIndex::ADASQ4: return 0.8;
    case ClinicalIndex::RAVLT_learning: return 1.5;
    case ClinicalIndex::LDELTOTAL: return 1.5;
  }
  return 0.0;
}

Visit emit_visit(const SeverityState& state, const Date& date, Profile profile,
                 double noise_scale, Rng& rng,
                 const std::map<ClinicalIndex, double>& noise_override) {
  Visit visit{date, {}};
  for (ClinicalIndex index : profile_indices(profile)) {
    const auto override_it = noise_override.find(index);
    const double sigma = override_it != noise_override.end() ? override_it->second
                                                            : noise_scale * unit_noise(index);
    double value = zero_noise_value(index, state.level);
    // Draw even at sigma = 0 so the stream layout is independent of noise.
    value += sigma * standard_normal(rng);
    const auto range = index_range(index);
    visit.observations[index] = snap_to_grid(index, std::clamp(value, range.lo, range.hi));
  }
  return visit;
}

int label_for_level(int level) { return level >= kDementiaLevel ? 1 : 0; }

Cohort generate_cohort(const CohortConfig& config) {
  config.validate();
  Cohort cohort{config.profile, {}};
  cohort.patients.reserve(config.n_patients);
  for (std::size_t i = 0; i < config.n_patients; ++i) {
    Rng rng{derive_seed(config.seed, "patient", i)};
    Patient patient;
    patient.patient_id = make_patient_id(i);

    SeverityState state;
    state.drift = uniform01(rng) * config.max_drift;
    state.level = static_cast<int>(uniform_int(rng, 0, config.max_initial_level));
    const auto n_visits = uniform_int(rng, config.min_visits, config.max_visits);
    const auto day = static_cast<unsigned>(uniform_int(rng, 1, 28));
    Date date = add_months(
        std::chrono::year{2015} / std::chrono::January / std::chrono::day{day},
        static_cast<int>(uniform_int(rng, 0, 59)));

    for (std::int64_t v = 0; v < n_visits; ++v) {
      if (v > 0) {
        const auto gap = static_cast<int>(
            uniform_int(rng, config.min_gap_months, config.max_gap_months));
        for (int m = 0; m < gap; ++m) state = latent_step(state, config.fluctuation_prob, rng);
        date = add_months(date, gap);
      }
      patient.visits.push_back(
          emit_visit(state, date, config.profile, config.noise_scale, rng, config.noise_override));
      patient.trajectory.push_back(state);
    }
    patient.final_label = label_for_level(patient.trajectory.back().level);
    cohort.patients.push_back(std::move(patient));
  }
  return cohort;
}

namespace {

using LevelDist = std::array<double, kMaxLevel + 1>;

LevelDist step_distribution(const LevelDist& dist, double fluctuation, double drift) {
  LevelDist next{};
  const double down = fluctuation;
  const double up = (1.0 - fluctuation) * drift;
  const double stay = 1.0 - down - up;
  for (int l = 0; l <= kMaxLevel; ++l) {
    next[std::max(l - 1, 0)] += dist[l] * down;
    next[std::min(l + 1, kMaxLevel)] += dist[l] * up;
    next[l] += dist[l] * stay;
  }
  return next;
}

// P(final positive | drift) marginalized over visit counts and gaps.
double positive_given_drift(const CohortConfig& c, double drift,
                            const std::vector<double>& months_dist) {
  LevelDist dist{};
  for (int l = 0; l <= c.max_initial_level; ++l) dist[l] = 1.0 / (c.max_initial_level + 1);
  double positive = 0.0;
  for (std::size_t t = 0; t < months_dist.size(); ++t) {
    if (months_dist[t] > 0.0) {
      double mass = 0.0;
      for (int l = kDementiaLevel; l <= kMaxLevel; ++l) mass += dist[l];
      positive += months_dist[t] * mass;
    }
    dist = step_distribution(dist, c.fluctuation_prob, drift);
  }
  return positive;
}

}  // namespace

double expected_prevalence(const CohortConfig& config) {
  config.validate();
  // Distribution of total elapsed months: mixture over visit counts of the
  // (n-1)-fold convolution of the uniform gap distribution.
  const int max_months = (config.max_visits - 1) * config.max_gap_months;
  std::vector<double> months(static_cast<std::size_t>(max_months) + 1, 0.0);
  const double visit_weight = 1.0 / (config.max_visits - config.min_visits + 1);
  const double gap_weight = 1.0 / (config.max_gap_months - config.min_gap_months + 1);
  std::vector<double> conv{1.0};  // zero gaps
  for (int n = 1; n <= config.max_visits; ++n) {
    if (n >= config.min_visits)
      for (std::size_t t = 0; t < conv.size(); ++t) months[t] += visit_weight * conv[t];
    if (n == config.max_visits) break;
    std::vector<double> next(conv.size() + config.max_gap_months, 0.0);
    for (std::size_t t = 0; t < conv.size(); ++t)
      for (int g = config.min_gap_months; g <= config.max_gap_months; ++g)
        next[t + g] += conv[t] * gap_weight;
    conv = std::move(next);
  }

  if (config.max_drift == 0.0) return positive_given_drift(config, 0.0, months);
  // The integrand is a smooth polynomial in drift; 64 panels of 5-point
  // Gauss-Legendre put the quadrature error far below sampling noise.
  static constexpr std::array<double, 5> nodes{-0.9061798459386640, -0.5384693101056831, 0.0,
                                               0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> weights{0.2369268850561891, 0.4786286704993665,
                                                 0.5688888888888889, 0.4786286704993665,
                                                 0.2369268850561891};
  const int panels = 64;
  const double width = config.max_drift / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * width;
    for (std::size_t k = 0; k < nodes.size(); ++k)
      total += weights[k] * 0.5 * width *
               positive_given_drift(config, mid + 0.5 * width * nodes[k], months);
  }
  return total / config.max_drift;
}

void write_cohort(std::ostream& out, const Cohort& cohort) {
  for (const auto& patient : cohort.patients) {
    nlohmann::ordered_json line;
    line["patient_id"] = patient.patient_id;
    line["final_label"] = patient.final_label;
    auto visits = nlohmann::ordered_json::array();
    for (const auto& visit : patient.visits) {
      nlohmann::ordered_json obs = nlohmann::ordered_json::object();
      for (const auto& [index, value] : visit.observations) obs[std::string{index_name(index)}] = value;
      visits.push_back({{"date", format_date(visit.date)}, {"observations", std::move(obs)}});
    }
    line["visits"] = std::move(visits);
    out << line.dump() << '\n';
  }
}

Cohort read_cohort(std::istream& in, Profile profile) {
  Cohort cohort{profile, {}};
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    auto fail = [&](const std::string& why) {
      return ParseError("cohort line " + std::to_string(line_no) + ": " + why);
    };
    try {
      const auto record = nlohmann::json::parse(text);
      Patient patient;
      patient.patient_id = record.at("patient_id").get<std::string>();
      patient.final_label = record.at("final_label").get<int>();
      if (patient.final_label != 0 && patient.final_label != 1) throw fail("final_label must be 0 or 1");
      for (const auto& v : record.at("visits")) {
        Visit visit;
        const auto date = parse_date(v.at("date").get<std::string>());
        if (!date) throw fail("bad date");
        visit.date = *date;
        for (const auto& [key, value] : v.at("observations").items()) {
          const auto index = parse_index(key);
          if (!index) throw fail("unknown index " + key);
          const double x = value.get<double>();
          const auto range = index_range(*index);
          if (!(x >= range.lo && x <= range.hi)) throw fail(key + " out of range");
          visit.observations[*index] = x;
        }
        if (!patient.visits.empty() && !(patient.visits.back().date < visit.date))
          throw fail("visit dates not strictly increasing");
        patient.visits.push_back(std::move(visit));
      }
      cohort.patients.push_back(std::move(patient));
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
  }
  return cohort;
}

}  // namespace dr1
