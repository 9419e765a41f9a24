#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "metalab/agents/q_lambda.hpp"
#include "metalab/context/buffer.hpp"
#include "metalab/context/meta_net.hpp"
#include "metalab/envs/environment.hpp"
#include "metalab/metaopt/learner.hpp"
#include "metalab/metaopt/meta_param.hpp"
#include "metalab/metaopt/objectives.hpp"

namespace metalab::metaopt {

struct QLearnerConfig {
  agents::QConfig agent;
  MetaConfig meta;
  double epsilon = 0.1;  // used when epsilon is not tuned
  context::FeatureSpec context;
  std::vector<std::size_t> meta_hidden{128, 128};
  diff::AdamConfig meta_adam{};
  std::size_t baseline_iteration = 16;  // env steps per logged iteration without meta-learning
};

/// Peng's Q(lambda) in a single stream with epsilon either fixed or adapted
/// by the BMG objective: the epsilon-greedy policy of the current q is pulled
/// toward the greedy policy of q after L-1 further updates.
class QLearner final : public Learner {
 public:
  QLearner(envs::Environment& env, QLearnerConfig cfg, std::uint64_t init_seed, std::uint64_t explore_seed)
      : env_(env), cfg_(std::move(cfg)), init_rng_(init_seed), rng_(explore_seed),
        agent_(env.obs_dim(), static_cast<std::size_t>(env.num_actions()), cfg_.agent, init_rng_),
        eps_(MetaParameter::fixed("epsilon", cfg_.epsilon)) {
    cfg_.meta.validate(true);
    if (cfg_.baseline_iteration == 0) throw UsageError("baseline iteration length must be positive");
    const bool meta = cfg_.meta.objective != Objective::None;
    if (!meta && !(cfg_.epsilon >= 0 && cfg_.epsilon <= 1)) throw UsageError("epsilon must lie in [0, 1]");
    if (cfg_.context.enabled()) {
      if (!meta) throw UsageError("context features need a meta-gradient objective");
      cfg_.context.learner = context::LearnerKind::QLambda;
      cfg_.context.num_meta = 1;
      tracker_.emplace(cfg_.context);
      context::MetaNet net(cfg_.context.dim(), cfg_.meta_hidden, 1.0, init_rng_);
      net.pretrain(init_rng_);
      eps_ = MetaParameter::contextual("epsilon", std::move(net), cfg_.meta_adam);
    } else if (meta) {
      eps_ = MetaParameter::free("epsilon", 0.5, 0.0, 1.0, cfg_.meta_adam);
    }
    obs_ = env_.observe();
    q_obs_ = agent_.q_values(obs_);
  }

  std::uint64_t env_steps() const override { return steps_; }
  std::uint64_t steps_per_iteration() const override {
    return cfg_.meta.objective == Objective::None ? cfg_.baseline_iteration : cfg_.meta.L - 1;
  }
  std::vector<std::string> meta_names() const override { return {"epsilon"}; }
  const context::FeatureSpec* context_spec() const override { return tracker_ ? &tracker_->spec() : nullptr; }
  double probe(const std::vector<double>& ctx) const override { return eps_.value(ctx); }

  const agents::QLambda& agent() const { return agent_; }
  agents::QLambda& agent() { return agent_; }
  const MetaParameter& epsilon() const { return eps_; }
  std::vector<double> current_context() const { return tracker_ ? tracker_->current() : std::vector<double>{}; }

  IterationMetrics iterate(std::uint64_t budget) override {
    if (budget == 0) throw UsageError("step budget is zero");
    IterationMetrics m;
    m.outer_iteration = iteration_++;
    const double reward_before = reward_total_;
    const std::uint64_t steps_before = steps_;
    const std::uint64_t n = std::min(budget, steps_per_iteration());

    if (cfg_.meta.objective == Objective::None || n < steps_per_iteration()) {
      for (std::uint64_t i = 0; i < n; ++i) m.inner_loss = step(nullptr);
    } else {
      const std::vector<Tensor> theta0 = agent_.net().params();
      const std::size_t D = env_.obs_dim();
      Tensor states(Shape{n, D});
      Tensor contexts(Shape{n, tracker_ ? tracker_->spec().dim() : 0});
      for (std::uint64_t i = 0; i < n; ++i) {
        std::copy(obs_.begin(), obs_.end(), states.values().begin() + static_cast<std::ptrdiff_t>(i * D));
        std::vector<double> ctx;
        m.inner_loss = step(&ctx);
        std::copy(ctx.begin(), ctx.end(), contexts.values().begin() + static_cast<std::ptrdiff_t>(i * ctx.size()));
      }
      const auto agree = greedy_agreement(diff::Mlp::forward(theta0, states), agent_.net().forward(states));
      Tape tape;
      eps_.bind(tape);
      Var e = eps_.on_tape_batch(contexts, n);
      Var outer = bmg_outer_loss_q(e, agree, static_cast<std::size_t>(env_.num_actions()));
      m.outer_loss = outer.value().item();
      meta_step(std::span<MetaParameter>(&eps_, 1), outer, cfg_.meta.meta_lr);
      m.meta_step = true;
    }

    m.env_step = steps_;
    m.task_index = env_.task_index();
    m.steps = steps_ - steps_before;
    m.reward_sum = reward_total_ - reward_before;
    m.mean_rollout_reward = m.reward_sum / static_cast<double>(m.steps);
    m.meta = {last_eps_};
    return m;
  }

 private:
  /// Acts once, feeds the transition to the agent and the context. Returns the
  /// loss of the update it triggered (0 while the window fills).
  double step(std::vector<double>* ctx_out) {
    std::vector<double> ctx = tracker_ ? tracker_->current() : std::vector<double>{};
    const double eps = std::clamp(eps_.value(ctx), 0.0, 1.0);
    const int a = agents::QLambda::act(q_obs_, eps, rng_);
    const auto tr = env_.step(a);
    ++steps_;
    reward_total_ += tr.reward;
    const auto q_next = agent_.q_values(tr.next_obs);
    const double max_next = *std::max_element(q_next.begin(), q_next.end());
    const double q_sa = q_obs_[static_cast<std::size_t>(a)];
    auto info = agent_.observe(agents::QStep{obs_, a, tr.reward, tr.continuation, max_next});
    if (tracker_) {
      const double td = context::q_td_error(tr.reward, tr.continuation, cfg_.agent.gamma, max_next, q_sa);
      tracker_->push_raw(context::q_raw_frame(tracker_->spec(), {tr.reward, q_sa, td}));
    }
    obs_ = tr.next_obs;
    q_obs_ = q_next;
    last_eps_ = eps;
    if (on_inner) on_inner(InnerLog{steps_, env_.task_index(), tr.reward, {eps}});
    if (ctx_out) *ctx_out = std::move(ctx);
    return info ? info->loss : 0.0;
  }

  envs::Environment& env_;
  QLearnerConfig cfg_;
  std::mt19937_64 init_rng_;
  std::mt19937_64 rng_;
  agents::QLambda agent_;
  MetaParameter eps_;
  std::optional<context::ContextTracker> tracker_;
  std::vector<double> obs_;
  std::vector<double> q_obs_;
  double last_eps_ = 0;
  std::uint64_t steps_ = 0;
  std::uint64_t iteration_ = 0;
  double reward_total_ = 0;
};

}  // namespace metalab::metaopt
