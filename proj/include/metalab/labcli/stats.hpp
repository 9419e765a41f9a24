#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "metalab/errors.hpp"

namespace metalab::labcli {

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw UsageError("mean of an empty sample");
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double std_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

/// Linear interpolation between order statistics.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw UsageError("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct Distribution {
  std::size_t n = 0;
  double mean = 0, std = 0, median = 0, q1 = 0, q3 = 0;
};

inline Distribution describe(const std::vector<double>& xs) {
  return {xs.size(), mean_of(xs), std_of(xs), quantile(xs, 0.5), quantile(xs, 0.25), quantile(xs, 0.75)};
}

struct RelativeImprovement {
  double percent = 0;
  std::vector<double> per_seed;  // each method value against the baseline mean
};

/// 100 * (mean(method) - mean(baseline)) / |mean(baseline)|.
inline RelativeImprovement relative_improvement(std::span<const double> method, std::span<const double> baseline) {
  if (method.empty() || baseline.empty()) throw UsageError("relative improvement needs non-empty samples");
  const double b = mean_of(baseline);
  if (std::abs(b) < 1e-9) throw UsageError("relative improvement is undefined: baseline mean is zero");
  RelativeImprovement out;
  out.percent = 100.0 * (mean_of(method) - b) / std::abs(b);
  for (double m : method) out.per_seed.push_back(100.0 * (m - b) / std::abs(b));
  return out;
}

}  // namespace metalab::labcli
