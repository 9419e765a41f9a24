#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "metalab/agents/policy.hpp"
#include "metalab/agents/returns.hpp"
#include "metalab/diff/adam.hpp"
#include "metalab/diff/mlp.hpp"
#include "metalab/diff/tape.hpp"

namespace metalab::agents {

using diff::Mlp;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

/// Consecutive transitions from the stream plus the observation after the last one.
struct RolloutBatch {
  Tensor obs;        // [T, obs_dim]
  Tensor last_next;  // [1, obs_dim]
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> continuations;
  std::vector<std::size_t> cells;  // agent cell at each observation

  std::size_t size() const { return actions.size(); }
};

struct ACConfig {
  std::vector<std::size_t> hidden{256, 256};
  double lr = 0.1;
  double gamma = 0.99;
  std::size_t rollout = 16;
};

/// Returns, advantages and the value estimates they were built from.
/// values has T + 1 entries; the last is v(s_T) used to bootstrap.
struct ACTargets {
  std::vector<double> values;
  std::vector<double> returns;
  std::vector<double> advantages;
};

inline Tensor stack_rows(const Tensor& top, const Tensor& last) {
  std::vector<double> data(top.values());
  data.insert(data.end(), last.values().begin(), last.values().end());
  return Tensor(Shape{top.rows() + 1, top.cols()}, std::move(data));
}

inline ACTargets ac_targets(std::span<const Tensor> value_params, const RolloutBatch& batch, double gamma) {
  const Tensor v = Mlp::forward(value_params, stack_rows(batch.obs, batch.last_next));
  ACTargets out;
  out.values = v.values();
  const std::size_t T = batch.size();
  out.returns = nstep_returns(batch.rewards, batch.continuations, gamma, out.values[T]);
  out.advantages.resize(T);
  for (std::size_t t = 0; t < T; ++t) out.advantages[t] = out.returns[t] - out.values[t];
  return out;
}

inline std::vector<Tensor> values_of(std::span<const Var> vs) {
  std::vector<Tensor> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.push_back(v.value());
  return out;
}

struct PolicyTerms {
  Var policy_loss;   // -mean(log pi(a_t|s_t) * A_t)
  Var neg_entropy;   // mean(sum_a pi log pi)
  Var log_probs;     // [T, A]
};

inline PolicyTerms policy_terms(std::span<const Var> pi_params, const Tensor& obs, std::span<const int> actions,
                                std::span<const double> advantages) {
  Tape& tape = *pi_params.front().tape();
  const std::size_t T = actions.size();
  Var logp = diff::log_softmax(Mlp::forward(pi_params, tape.constant(obs)));
  const std::size_t A = logp.value().cols();
  Tensor weight(Shape{T, A});
  for (std::size_t t = 0; t < T; ++t) weight.at(t, static_cast<std::size_t>(actions[t])) = advantages[t];
  const double inv_t = 1.0 / static_cast<double>(T);
  PolicyTerms out;
  out.log_probs = logp;
  out.policy_loss = diff::scale(diff::sum(logp * tape.constant(std::move(weight))), -inv_t);
  out.neg_entropy = diff::scale(diff::sum(diff::exp(logp) * logp), inv_t);
  return out;
}

struct ACLoss {
  Var total;
  Var policy;
  Var value;
  Var entropy;  // negative entropy
  Var l2;
};

inline Var l2_norm_sq(std::span<const Var> params) {
  Var acc = diff::sum(diff::square(params.front()));
  for (std::size_t k = 1; k < params.size(); ++k) acc = acc + diff::sum(diff::square(params[k]));
  return acc;
}

/// L_pi + L_v + alpha_ent * L_ent + alpha_l2 * L_2, with returns and
/// advantages computed from the current values and held constant. Passing
/// `frozen` substitutes precomputed targets.
inline ACLoss ac_inner_loss(std::span<const Var> pi_params, std::span<const Var> v_params, const RolloutBatch& batch,
                            Var alpha_ent, Var alpha_l2, double gamma, const ACTargets* frozen = nullptr) {
  if (batch.size() == 0) throw UsageError("ac_inner_loss needs a non-empty rollout");
  Tape& tape = *pi_params.front().tape();
  const auto targets = frozen ? *frozen : ac_targets(values_of(v_params), batch, gamma);
  auto pt = policy_terms(pi_params, batch.obs, batch.actions, targets.advantages);

  const std::size_t T = batch.size();
  Var v = diff::reshape(Mlp::forward(v_params, tape.constant(batch.obs)), Shape{T});
  Var G = tape.constant(Tensor(Shape{T}, targets.returns));
  ACLoss out;
  out.policy = pt.policy_loss;
  out.value = diff::scale(diff::sum(diff::square(v - G)), 0.5 / static_cast<double>(T));
  out.entropy = pt.neg_entropy;
  std::vector<Var> all(pi_params.begin(), pi_params.end());
  all.insert(all.end(), v_params.begin(), v_params.end());
  out.l2 = l2_norm_sq(all);
  out.total = out.policy + out.value + alpha_ent * out.entropy + alpha_l2 * out.l2;
  if (!std::isfinite(out.total.value().item())) throw NumericFault("non-finite actor-critic loss");
  return out;
}

struct ACRecordedUpdate {
  std::vector<Var> pi;
  std::vector<Var> v;
  ACLoss loss;
  std::vector<double> grad;  // flattened inner gradient, for context features
};

inline std::vector<double> flat_values(std::span<const Var> vs) {
  std::vector<double> out;
  for (const auto& v : vs) out.insert(out.end(), v.value().values().begin(), v.value().values().end());
  return out;
}

/// theta' = theta - lr * grad(inner loss), recorded so theta' stays
/// differentiable in the meta-parameters.
inline ACRecordedUpdate ac_update(std::span<const Var> pi_params, std::span<const Var> v_params,
                                  const RolloutBatch& batch, Var alpha_ent, Var alpha_l2, const ACConfig& cfg,
                                  const ACTargets* frozen = nullptr) {
  Tape& tape = *pi_params.front().tape();
  ACRecordedUpdate out;
  out.loss = ac_inner_loss(pi_params, v_params, batch, alpha_ent, alpha_l2, cfg.gamma, frozen);
  std::vector<Var> all(pi_params.begin(), pi_params.end());
  all.insert(all.end(), v_params.begin(), v_params.end());
  auto grads = tape.gradients_graph(out.loss.total, all);
  out.grad = flat_values(grads);
  auto next = diff::sgd_step(all, grads, cfg.lr);
  out.pi.assign(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(pi_params.size()));
  out.v.assign(next.begin() + static_cast<std::ptrdiff_t>(pi_params.size()), next.end());
  return out;
}

struct ACStepStats {
  double total = 0, policy = 0, value = 0, entropy = 0, l2 = 0;
  std::vector<double> grad;
};

/// Softmax policy and scalar value head, each its own MLP.
class ActorCritic {
 public:
  ActorCritic(std::size_t obs_dim, std::size_t num_actions, const ACConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg), policy_({obs_dim, cfg.hidden, num_actions}, rng), value_({obs_dim, cfg.hidden, 1}, rng) {}

  const ACConfig& config() const { return cfg_; }
  Mlp& policy() { return policy_; }
  Mlp& value() { return value_; }
  const Mlp& policy() const { return policy_; }
  const Mlp& value() const { return value_; }

  std::vector<double> probs(const std::vector<double>& obs) const {
    const Tensor logits = policy_.forward(Tensor(Shape{1, obs.size()}, obs));
    return softmax(logits.values());
  }

  double state_value(const std::vector<double>& obs) const {
    return value_.forward(Tensor(Shape{1, obs.size()}, obs)).item();
  }

  /// Samples an action; returns it with its log-probability.
  template <class Rng>
  std::pair<int, double> act(const std::vector<double>& obs, Rng& rng) const {
    const auto p = probs(obs);
    const int a = sample(p, rng);
    return {a, std::log(p[static_cast<std::size_t>(a)])};
  }

  /// Plain SGD step with the meta-parameters held fixed.
  ACStepStats update(const RolloutBatch& batch, double alpha_ent, double alpha_l2, const ACTargets* frozen = nullptr) {
    Tape tape;
    auto pi = policy_.record(tape);
    auto v = value_.record(tape);
    auto loss = ac_inner_loss(pi, v, batch, tape.constant(alpha_ent), tape.constant(alpha_l2), cfg_.gamma, frozen);
    std::vector<Var> all(pi);
    all.insert(all.end(), v.begin(), v.end());
    auto grads = tape.gradients(loss.total, all);
    ACStepStats st{loss.total.value().item(), loss.policy.value().item(), loss.value.value().item(),
                   loss.entropy.value().item(), loss.l2.value().item(), {}};
    for (const auto& g : grads) st.grad.insert(st.grad.end(), g.values().begin(), g.values().end());
    auto apply = [&](std::vector<Tensor>& ps, std::size_t offset) {
      for (std::size_t k = 0; k < ps.size(); ++k) {
        auto p = ps[k].data();
        const auto g = grads[offset + k].data();
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg_.lr * g[i];
        if (!ps[k].all_finite()) throw NumericFault("actor-critic update produced a non-finite parameter");
      }
    };
    apply(policy_.params(), 0);
    apply(value_.params(), policy_.params().size());
    return st;
  }

 private:
  ACConfig cfg_;
  Mlp policy_;
  Mlp value_;
};

}  // namespace metalab::agents
