#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "metalab/diff/tape.hpp"

namespace metalab::diff {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-4;
};

/// Bias-corrected Adam moments, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-4;

  static AdamState for_params(std::span<const Tensor> params, AdamConfig cfg = {}) {
    AdamState s;
    s.beta1 = cfg.beta1;
    s.beta2 = cfg.beta2;
    s.eps = cfg.eps;
    for (const auto& p : params) {
      s.first_moment.emplace_back(p.shape());
      s.second_moment.emplace_back(p.shape());
    }
    return s;
  }
};

/// Moments below this magnitude are flushed to zero.
inline constexpr double kMomentFloor = 1e-200;

inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw StructuralError("adam_step: parameter, gradient and moment counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != grads[k].shape() || params[k].shape() != state.first_moment[k].shape() ||
        params[k].shape() != state.second_moment[k].shape())
      throw StructuralError("adam_step: shape mismatch for parameter " + std::to_string(k));
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
  const double step = lr / c1;
  const double inv_sqrt_c2 = 1.0 / std::sqrt(c2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* __restrict p = params[k].data().data();
    const double* __restrict g = grads[k].data().data();
    double* __restrict m = state.first_moment[k].data().data();
    double* __restrict v = state.second_moment[k].data().data();
    const std::size_t n = params[k].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      // Moments of parameters that stop receiving gradient decay into the
      // subnormal range, where arithmetic is very slow; treat them as zero.
      if (std::abs(m[i]) < kMomentFloor) m[i] = 0.0;
      if (v[i] < kMomentFloor) v[i] = 0.0;
      p[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
    if (!params[k].all_finite()) throw NumericFault("adam_step produced a non-finite parameter");
  }
}

/// Adam whose moments live on a tape, so the update is differentiable.
struct RecordedAdam {
  std::vector<Var> first_moment;
  std::vector<Var> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-4;

  static RecordedAdam from_state(Tape& tape, const AdamState& s) {
    RecordedAdam r;
    for (const auto& m : s.first_moment) r.first_moment.push_back(tape.constant(m));
    for (const auto& v : s.second_moment) r.second_moment.push_back(tape.constant(v));
    r.step_count = s.step_count;
    r.beta1 = s.beta1;
    r.beta2 = s.beta2;
    r.eps = s.eps;
    return r;
  }

  AdamState to_state() const {
    AdamState s;
    for (const auto& m : first_moment) s.first_moment.push_back(m.value());
    for (const auto& v : second_moment) s.second_moment.push_back(v.value());
    s.step_count = step_count;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
  }

  /// Returns the updated parameters; the moments are advanced in place.
  std::vector<Var> step(std::span<const Var> params, std::span<const Var> grads, Var lr) {
    if (params.size() != grads.size() || params.size() != first_moment.size())
      throw StructuralError("recorded adam: parameter, gradient and moment counts differ");
    ++step_count;
    const double t = static_cast<double>(step_count);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    std::vector<Var> out;
    out.reserve(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      first_moment[k] = scale(first_moment[k], beta1) + scale(grads[k], 1.0 - beta1);
      second_moment[k] = scale(second_moment[k], beta2) + scale(square(grads[k]), 1.0 - beta2);
      auto mhat = scale(first_moment[k], 1.0 / c1);
      auto denom = add_scalar(sqrt(scale(second_moment[k], 1.0 / c2)), eps);
      auto lr_b = broadcast_scalar(lr, params[k].shape());
      out.push_back(params[k] - lr_b * (mhat / denom));
    }
    return out;
  }
};

/// theta - lr * g for every parameter, recorded on the tape.
inline std::vector<Var> sgd_step(std::span<const Var> params, std::span<const Var> grads, Var lr) {
  if (params.size() != grads.size()) throw StructuralError("sgd_step: parameter and gradient counts differ");
  std::vector<Var> out;
  out.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k)
    out.push_back(params[k] - broadcast_scalar(lr, params[k].shape()) * grads[k]);
  return out;
}

inline std::vector<Var> sgd_step(std::span<const Var> params, std::span<const Var> grads, double lr) {
  if (params.size() != grads.size()) throw StructuralError("sgd_step: parameter and gradient counts differ");
  std::vector<Var> out;
  out.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) out.push_back(params[k] - scale(grads[k], lr));
  return out;
}

}  // namespace metalab::diff
