#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "metalab/errors.hpp"

namespace metalab::agents {

/// Index of the largest entry; ties go to the lowest index.
inline int argmax(std::span<const double> xs) {
  if (xs.empty()) throw UsageError("argmax of an empty row");
  int best = 0;
  for (int i = 1; i < static_cast<int>(xs.size()); ++i)
    if (xs[static_cast<std::size_t>(i)] > xs[static_cast<std::size_t>(best)]) best = i;
  return best;
}

/// 1 - eps + eps/|A| on the greedy action, eps/|A| elsewhere.
inline std::vector<double> epsilon_greedy(std::span<const double> q_row, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw UsageError("epsilon must lie in [0, 1]");
  const double n = static_cast<double>(q_row.size());
  std::vector<double> p(q_row.size(), epsilon / n);
  p[static_cast<std::size_t>(argmax(q_row))] += 1.0 - epsilon;
  return p;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= s;
  return p;
}

/// Inverse-CDF draw from a categorical distribution.
template <class Rng>
int sample(std::span<const double> probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding can leave acc slightly below 1; fall back to the last non-zero entry.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0) return static_cast<int>(i);
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace metalab::agents
