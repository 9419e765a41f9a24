#pragma once

#include <algorithm>
#include <deque>
#include <optional>
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

struct QConfig {
  std::vector<std::size_t> hidden{256, 256};
  double lr = 3e-5;
  double gamma = 0.99;
  double lambda = 0.9;
  double grad_ema = 0.9;
  std::size_t window = 16;
  diff::AdamConfig adam{};
};

/// One transition waiting for its lambda-return. next_max_q is max_a q(s_{t+1}, a)
/// as estimated when the transition was observed.
struct QStep {
  std::vector<double> obs;
  int action = 0;
  double reward = 0;
  double continuation = 1;
  double next_max_q = 0;
};

struct QUpdateInfo {
  double loss = 0;
  double target = 0;
  double q_sa = 0;
};

/// Online Peng's Q(lambda). Each observed step enters a trailing window; once
/// the window holds `window` steps its oldest entry is regressed toward the
/// lambda-return computed over the window, then dropped.
class QLambda {
 public:
  QLambda(std::size_t obs_dim, std::size_t num_actions, const QConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg), net_({obs_dim, cfg.hidden, num_actions}, rng) {
    if (cfg.window == 0) throw UsageError("Q(lambda) window must be positive");
    adam_ = diff::AdamState::for_params(net_.params(), cfg.adam);
    for (const auto& p : net_.params()) ema_.emplace_back(p.shape(), 0.0);
  }

  const QConfig& config() const { return cfg_; }
  diff::Mlp& net() { return net_; }
  const diff::Mlp& net() const { return net_; }
  const std::vector<Tensor>& gradient_ema() const { return ema_; }
  const std::deque<QStep>& pending() const { return pending_; }

  std::vector<double> q_values(const std::vector<double>& obs) const {
    return net_.forward(Tensor(Shape{1, obs.size()}, obs)).values();
  }

  template <class Rng>
  static int act(std::span<const double> q_row, double epsilon, Rng& rng) {
    return sample(epsilon_greedy(q_row, epsilon), rng);
  }

  /// One step on 0.5 (target - q(s, a))^2: the raw gradient feeds the EMA,
  /// and Adam consumes the EMA.
  QUpdateInfo q_update(const std::vector<double>& obs, int action, double target) {
    Tape tape;
    auto params = net_.record(tape);
    Var q = Mlp::forward(params, tape.constant(Tensor(Shape{1, obs.size()}, obs)));
    Tensor pick(q.shape(), 0.0);
    pick[static_cast<std::size_t>(action)] = 1.0;
    Var q_sa = diff::sum(q * tape.constant(std::move(pick)));
    Var loss = diff::scale(diff::square(diff::add_scalar(q_sa, -target)), 0.5);
    auto grads = tape.gradients(loss, params);
    const double d = cfg_.grad_ema;
    for (std::size_t k = 0; k < ema_.size(); ++k) {
      auto e = ema_[k].data();
      const auto g = grads[k].data();
      for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] = d * e[i] + (1.0 - d) * g[i];
        if (std::abs(e[i]) < diff::kMomentFloor) e[i] = 0.0;
      }
    }
    diff::adam_step(net_.params(), ema_, adam_, cfg_.lr);
    return {loss.value().item(), target, q_sa.value().item()};
  }

  std::optional<QUpdateInfo> observe(QStep step) {
    pending_.push_back(std::move(step));
    if (pending_.size() < cfg_.window) return std::nullopt;
    std::vector<double> r, c, m;
    for (const auto& s : pending_) {
      r.push_back(s.reward);
      c.push_back(s.continuation);
      m.push_back(s.next_max_q);
    }
    const double target = peng_q_targets(r, c, m, cfg_.lambda, cfg_.gamma).front();
    const QStep oldest = std::move(pending_.front());
    pending_.pop_front();
    return q_update(oldest.obs, oldest.action, target);
  }

 private:
  QConfig cfg_;
  diff::Mlp net_;
  diff::AdamState adam_;
  std::vector<Tensor> ema_;
  std::deque<QStep> pending_;
};

}  // namespace metalab::agents
