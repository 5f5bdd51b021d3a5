#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dementia_r1/policy.hpp"

namespace dr1::testing {

// Central differences of f over every flattened parameter.
inline std::vector<double> numeric_gradient(const PolicyParams& params,
                                            const std::function<double(const PolicyParams&)>& f,
                                            double step = 1e-5) {
  PolicyParams probe = params;
  std::vector<double> flat = params.flatten();
  std::vector<double> grad(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + step;
    probe.assign(flat);
    const double up = f(probe);
    flat[i] = saved - step;
    probe.assign(flat);
    const double down = f(probe);
    flat[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// ||a - b|| / max(||a||, ||b||), or the absolute gap when both are ~0.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale < 1e-10 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

inline FeatureVector random_features(std::size_t dim, Rng& rng) {
  FeatureVector x(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = 2.0 * uniform01(rng) - 1.0;
  return x;
}

}  // namespace dr1::testing
