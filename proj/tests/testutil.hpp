#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hinite/rng.hpp"

namespace testutil {

// Relative error with an absolute floor so near-zero pairs compare sanely.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite difference of f with respect to *slot.
template <typename F>
double central_diff(F&& f, double& slot, double h = 1e-5) {
  const double orig = slot;
  slot = orig + h;
  const double up = f();
  slot = orig - h;
  const double down = f();
  slot = orig;
  return (up - down) / (2.0 * h);
}

inline std::vector<double> random_vector(hinite::Rng& rng, std::size_t size, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(size);
  for (double& x : v) x = dist(rng);
  return v;
}

// Values bounded away from zero, for kinked activations.
inline std::vector<double> random_vector_off_kink(hinite::Rng& rng, std::size_t size,
                                                  double min_abs = 0.1) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(size);
  for (double& x : v) {
    do {
      x = dist(rng);
    } while (std::abs(x) < min_abs);
  }
  return v;
}

}  // namespace testutil
