#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "chemrel/autodiff.hpp"

namespace chemrel::testing {

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out(n);
  for (double& v : out) v = dist(rng);
  return out;
}

/// Agreement rule for analytic vs numeric gradients.
inline bool grad_close(double analytic, double numeric, double abs_tol = 1e-6, double rel_tol = 1e-3) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_tol) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) <= rel_tol;
}

/// Central differences of a scalar function with respect to each entry of `x`.
inline std::vector<double> numeric_gradient(ad::Tensor x, const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> out(x.size());
  auto values = x.mutable_values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f();
    values[i] = saved - h;
    const double down = f();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

}  // namespace chemrel::testing
