#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "metalab/errors.hpp"

namespace metalab::context {

/// Per-channel streaming mean and population variance (Welford).
class RunningNormalizer {
 public:
  static constexpr double kEps = 1e-8;

  explicit RunningNormalizer(std::size_t channels = 0) : mean_(channels, 0.0), m2_(channels, 0.0) {}

  std::size_t channels() const { return mean_.size(); }
  std::uint64_t count() const { return count_; }
  double mean(std::size_t i) const { return mean_[i]; }

  /// Unit variance until the first sample arrives.
  double variance(std::size_t i) const { return count_ == 0 ? 1.0 : m2_[i] / static_cast<double>(count_); }

  void update(const std::vector<double>& x) {
    check(x);
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean_[i];
      mean_[i] += d / n;
      m2_[i] += d * (x[i] - mean_[i]);
    }
  }

  /// tanh((x - mean) / sqrt(var + eps)) under the current statistics.
  std::vector<double> normalize(const std::vector<double>& x) const {
    check(x);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh((x[i] - mean_[i]) / std::sqrt(variance(i) + kEps));
    return out;
  }

  /// Normalizes with the statistics seen so far, then folds x in.
  std::vector<double> normalize_then_update(const std::vector<double>& x) {
    auto out = normalize(x);
    update(x);
    return out;
  }

 private:
  void check(const std::vector<double>& x) const {
    if (x.size() != mean_.size()) throw StructuralError("normalizer frame width mismatch");
  }

  std::vector<double> mean_;
  std::vector<double> m2_;
  std::uint64_t count_ = 0;
};

}  // namespace metalab::context
