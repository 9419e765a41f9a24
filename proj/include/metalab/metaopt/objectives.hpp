#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "metalab/agents/actor_critic.hpp"
#include "metalab/agents/policy.hpp"
#include "metalab/diff/tape.hpp"

namespace metalab::metaopt {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kEpsilonClamp = 1e-6;

/// Softmax policy rows for each observation row.
inline Tensor policy_probs(std::span<const Tensor> pi_params, const Tensor& obs) {
  return diff::kernels::softmax_rows(diff::Mlp::forward(pi_params, obs));
}

/// L_pi(theta_K, D) + alpha_outer_ent * L_ent(theta_K, D).
inline Var mg_outer_loss(std::span<const Var> pi_params, const agents::RolloutBatch& batch,
                         std::span<const double> advantages, double alpha_outer_ent) {
  auto pt = agents::policy_terms(pi_params, batch.obs, batch.actions, advantages);
  if (alpha_outer_ent == 0.0) return pt.policy_loss;
  return pt.policy_loss + diff::scale(pt.neg_entropy, alpha_outer_ent);
}

/// Mean over rows of KL(target || pi_theta_K). The target rows are constants.
inline Var bmg_outer_loss_ac(std::span<const Var> pi_params, const Tensor& target_probs, const Tensor& obs) {
  if (target_probs.rows() != obs.rows()) throw StructuralError("target and observation rows differ");
  Tape& tape = *pi_params.front().tape();
  Var logp = diff::log_softmax(diff::Mlp::forward(pi_params, tape.constant(obs)));
  double neg_ent = 0;
  for (double p : target_probs.values()) neg_ent += p * std::log(std::max(p, kProbFloor));
  const double inv = 1.0 / static_cast<double>(obs.rows());
  Var cross = diff::sum(tape.constant(target_probs) * logp);
  return diff::add_scalar(diff::scale(cross, -inv), neg_ent * inv);
}

/// argmax agreement per row between two q tables.
inline std::vector<char> greedy_agreement(const Tensor& q_current, const Tensor& q_target) {
  if (q_current.shape() != q_target.shape()) throw StructuralError("q tables differ in shape");
  std::vector<char> out(q_current.rows());
  const std::size_t A = q_current.cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::span<const double> a(q_current.data().data() + i * A, A), b(q_target.data().data() + i * A, A);
    out[i] = agents::argmax(a) == agents::argmax(b);
  }
  return out;
}

/// Mean over states of KL(greedy(q_target) || eps-greedy(q_current, eps)):
/// -log(1 - eps + eps/|A|) where the argmaxes agree, -log(eps/|A|) where they
/// differ. epsilon has one entry per state. It is clamped into
/// [1e-6, 1 - 1e-6] for the logarithm with the gradient passed straight through.
inline Var bmg_outer_loss_q(Var epsilon, std::span<const char> agree, std::size_t num_actions) {
  Tape& tape = *epsilon.tape();
  const std::size_t B = agree.size();
  if (epsilon.value().size() != B) throw StructuralError("one epsilon per state is required");
  Tensor shift(Shape{B});
  Tensor coef(Shape{B});
  Tensor offset(Shape{B});
  const double inv_a = 1.0 / static_cast<double>(num_actions);
  for (std::size_t i = 0; i < B; ++i) {
    const double e = epsilon.value()[i];
    shift[i] = std::clamp(e, kEpsilonClamp, 1.0 - kEpsilonClamp) - e;
    coef[i] = agree[i] ? inv_a - 1.0 : inv_a;
    offset[i] = agree[i] ? 1.0 : 0.0;
  }
  Var e = epsilon.value().shape() == Shape{B} ? epsilon : diff::reshape(epsilon, Shape{B});
  Var clamped = e + tape.constant(std::move(shift));
  Var pi = clamped * tape.constant(std::move(coef)) + tape.constant(std::move(offset));
  return diff::scale(diff::sum(diff::log(pi)), -1.0 / static_cast<double>(B));
}

}  // namespace metalab::metaopt
