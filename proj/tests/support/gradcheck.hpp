#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "xva/rng.hpp"
#include "xva/tensor.hpp"

namespace xva::testing {

inline constexpr double kFdStep = 1e-5;
// Entries that miss the tolerance with the central difference at kFdStep
// are re-measured with the fourth-order five-point stencil at wider steps
// (less round-off, truncation O(h^4)) and with a narrower central step
// (closer to a ReLU/SELU kink). The best agreement is kept; a wrong
// analytic gradient disagrees with every estimator.
inline constexpr double kFdFivePointSteps[] = {1e-4, 1e-3};
inline constexpr double kFdNarrowStep = 1e-6;
inline constexpr double kFdRelTol = 1e-6;
// Gradient entries whose magnitude is below this are compared against it
// instead of against themselves; central differences cannot resolve them.
inline constexpr double kFdFloor = 1e-4;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool ok(double tol = kFdRelTol) const { return max_rel_error < tol; }
  std::string describe() const {
    return "max rel err " + std::to_string(max_rel_error) + " at " +
           std::to_string(worst_index) + " (analytic " + std::to_string(worst_analytic) +
           ", numeric " + std::to_string(worst_numeric) + ", " + std::to_string(checked) +
           " entries)";
  }
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kFdFloor});
}

/// Compares `analytic` (d f / d x) with central differences of `f` at `x`.
/// `x` is perturbed in place and restored. When `max_entries` is smaller
/// than x.size(), a seeded random subset is checked.
inline GradCheckResult check_gradient(Tensor64& x, const Tensor64& analytic,
                                      const std::function<double()>& f,
                                      std::size_t max_entries = SIZE_MAX,
                                      std::uint64_t subset_seed = 0) {
  GradCheckResult r;
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (max_entries < idx.size()) {
    Rng rng(subset_seed);
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(max_entries);
  }
  auto at = [&](std::size_t i, double v) {
    const double orig = x[i];
    x[i] = v;
    const double y = f();
    x[i] = orig;
    return y;
  };
  auto central = [&](std::size_t i, double h) {
    return (at(i, x[i] + h) - at(i, x[i] - h)) / (2 * h);
  };
  auto five_point = [&](std::size_t i, double h) {
    const double d1 = at(i, x[i] + h) - at(i, x[i] - h);
    const double d2 = at(i, x[i] + 2 * h) - at(i, x[i] - 2 * h);
    return (8 * d1 - d2) / (12 * h);
  };
  for (std::size_t i : idx) {
    double numeric = central(i, kFdStep);
    double err = rel_error(analytic[i], numeric);
    auto retry = [&](double n) {
      const double e = rel_error(analytic[i], n);
      if (e < err) {
        err = e;
        numeric = n;
      }
    };
    for (double h : kFdFivePointSteps) {
      if (err < kFdRelTol) break;
      retry(five_point(i, h));
    }
    if (err >= kFdRelTol) retry(central(i, kFdNarrowStep));
    ++r.checked;
    if (err > r.max_rel_error || r.checked == 1) {
      r.max_rel_error = std::max(r.max_rel_error, err);
      if (err >= r.max_rel_error) {
        r.worst_index = i;
        r.worst_analytic = analytic[i];
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

inline Tensor64 random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor64 t(shape);
  for (auto& v : t.data()) v = rng.gaussian(0.0, scale);
  return t;
}

/// sum(a * b) in double.
inline double weighted_sum(const Tensor64& a, const Tensor64& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace xva::testing
