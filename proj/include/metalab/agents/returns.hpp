#pragma once

#include <span>
#include <vector>

#include "metalab/errors.hpp"

namespace metalab::agents {

/// Bootstrapped n-step returns over a rollout:
/// G_t = r_t + gamma * c_t * G_{t+1}, G_T = bootstrap.
inline std::vector<double> nstep_returns(std::span<const double> rewards, std::span<const double> continuations,
                                         double gamma, double bootstrap) {
  if (rewards.size() != continuations.size()) throw UsageError("rewards and continuations differ in length");
  std::vector<double> G(rewards.size());
  double next = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    next = rewards[t] + gamma * continuations[t] * next;
    G[t] = next;
  }
  return G;
}

/// Peng's Q(lambda) returns by backward recursion:
/// G_t = r_t + gamma * c_t * (lambda * G_{t+1} + (1 - lambda) * max_a q(s_{t+1}, a)),
/// with G beyond the horizon bootstrapped by max_a q. next_max_q[t] = max_a q(s_{t+1}, a).
inline std::vector<double> peng_q_targets(std::span<const double> rewards, std::span<const double> continuations,
                                          std::span<const double> next_max_q, double lambda, double gamma) {
  if (rewards.empty()) throw UsageError("peng_q_targets needs a non-empty trajectory");
  if (rewards.size() != continuations.size() || rewards.size() != next_max_q.size())
    throw UsageError("peng_q_targets: trajectory fields differ in length");
  const std::size_t T = rewards.size();
  std::vector<double> G(T);
  double next = next_max_q[T - 1];
  for (std::size_t t = T; t-- > 0;) {
    next = rewards[t] + gamma * continuations[t] * (lambda * next + (1.0 - lambda) * next_max_q[t]);
    G[t] = next;
  }
  return G;
}

}  // namespace metalab::agents
