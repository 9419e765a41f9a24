#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "metalab/agents/actor_critic.hpp"
#include "metalab/context/buffer.hpp"
#include "metalab/context/meta_net.hpp"
#include "metalab/diff/unroll.hpp"
#include "metalab/envs/environment.hpp"
#include "metalab/metaopt/learner.hpp"
#include "metalab/metaopt/meta_param.hpp"
#include "metalab/metaopt/objectives.hpp"

namespace metalab::metaopt {

struct ACLearnerConfig {
  agents::ACConfig agent;
  MetaConfig meta;
  double alpha_ent = 0.0;  // used when the entropy weight is not tuned
  double alpha_l2 = 0.0;   // used when the L2 weight is not tuned
  bool tune_alpha_ent = true;
  bool tune_alpha_l2 = false;
  context::FeatureSpec context;  // no families: meta-parameters are plain scalars
  std::vector<std::size_t> meta_hidden{64, 64};
  diff::AdamConfig meta_adam{};
};

inline constexpr double kAlphaEntRange = 1.0;
inline constexpr double kAlphaL2Range = 1e-4;

/// Actor-critic in a single stream, with the entropy and L2 weights either
/// fixed or adapted by MG / BMG meta-gradients.
class ACLearner final : public Learner {
 public:
  ACLearner(envs::Environment& env, ACLearnerConfig cfg, std::uint64_t init_seed, std::uint64_t explore_seed)
      : env_(env), cfg_(std::move(cfg)), init_rng_(init_seed), rng_(explore_seed),
        agent_(env.obs_dim(), static_cast<std::size_t>(env.num_actions()), cfg_.agent, init_rng_) {
    cfg_.meta.validate(false);
    if (cfg_.agent.rollout == 0) throw UsageError("rollout length must be positive");
    const bool meta = cfg_.meta.objective != Objective::None;
    const std::size_t tuned = meta ? static_cast<std::size_t>(cfg_.tune_alpha_ent) + cfg_.tune_alpha_l2 : 0;
    if (meta && tuned == 0) throw UsageError("a meta-gradient run needs at least one tuned meta-parameter");
    if (cfg_.context.enabled()) {
      if (!meta) throw UsageError("context features need a meta-gradient objective");
      cfg_.context.learner = context::LearnerKind::ActorCritic;
      cfg_.context.num_actions = static_cast<std::size_t>(env.num_actions());
      cfg_.context.num_cells = env.num_cells();
      cfg_.context.num_meta = tuned;
      tracker_.emplace(cfg_.context);
    }
    params_.push_back(make_param("alpha_ent", meta && cfg_.tune_alpha_ent, cfg_.alpha_ent, kAlphaEntRange));
    params_.push_back(make_param("alpha_l2", meta && cfg_.tune_alpha_l2, cfg_.alpha_l2, kAlphaL2Range));
    for (auto& p : params_)
      if (p.learnable()) prev_meta_.push_back(p.mode() == MetaMode::Contextual ? 0.5 * p.hi() : p.value());
  }

  std::uint64_t env_steps() const override { return steps_; }
  std::uint64_t steps_per_iteration() const override { return updates_per_iteration() * cfg_.agent.rollout; }
  std::vector<std::string> meta_names() const override { return {"alpha_ent", "alpha_l2"}; }
  const context::FeatureSpec* context_spec() const override { return tracker_ ? &tracker_->spec() : nullptr; }
  double probe(const std::vector<double>& ctx) const override {
    for (const auto& p : params_)
      if (p.learnable()) return p.value(ctx);
    return params_.front().value();
  }

  const agents::ActorCritic& agent() const { return agent_; }
  agents::ActorCritic& agent() { return agent_; }
  const std::vector<MetaParameter>& meta_params() const { return params_; }
  const ACLearnerConfig& config() const { return cfg_; }

  std::size_t updates_per_iteration() const {
    switch (cfg_.meta.objective) {
      case Objective::None: return 1;
      case Objective::MG: return cfg_.meta.K;
      case Objective::BMG: return cfg_.meta.K + cfg_.meta.L - 1;
    }
    return 1;
  }

  IterationMetrics iterate(std::uint64_t budget) override {
    IterationMetrics m;
    m.outer_iteration = iteration_++;
    const std::uint64_t T = cfg_.agent.rollout;
    const std::uint64_t affordable = budget / T;
    if (affordable == 0) throw UsageError("step budget is smaller than one rollout");
    const double reward_before = reward_total_;
    const std::uint64_t steps_before = steps_;

    if (cfg_.meta.objective == Objective::None || affordable < updates_per_iteration()) {
      const std::uint64_t n = std::min<std::uint64_t>(affordable, updates_per_iteration());
      for (std::uint64_t i = 0; i < n; ++i) m.inner_loss = numeric_update();
    } else {
      Tape tape;
      for (auto& p : params_) p.bind(tape);
      auto pi = agent_.policy().record(tape);
      auto v = agent_.value().record(tape);
      diff::UnrollTrace trace(tape);
      agents::RolloutBatch last;
      for (std::size_t j = 0; j < cfg_.meta.K; ++j) {
        Prepared prep = prepare();
        std::vector<Var> etas{params_[0].on_tape(prep.ctx), params_[1].on_tape(prep.ctx)};
        auto up = agents::ac_update(pi, v, prep.batch, etas[0], etas[1], cfg_.agent);
        finish_update(prep, {etas[0].value().item(), etas[1].value().item()}, up.grad);
        m.inner_loss = up.loss.total.value().item();
        std::vector<Var> before(pi);
        before.insert(before.end(), v.begin(), v.end());
        std::vector<Var> after(up.pi);
        after.insert(after.end(), up.v.begin(), up.v.end());
        trace.record(std::move(before), etas, std::move(after));
        pi = std::move(up.pi);
        v = std::move(up.v);
        agent_.policy().assign(pi);
        agent_.value().assign(v);
        last = std::move(prep.batch);
      }
      Var outer;
      if (cfg_.meta.objective == Objective::MG) {
        const auto targets = agents::ac_targets(agents::values_of(v), last, cfg_.agent.gamma);
        outer = mg_outer_loss(pi, last, targets.advantages, cfg_.meta.alpha_outer_ent);
      } else {
        for (std::size_t j = 1; j < cfg_.meta.L; ++j) {
          m.inner_loss = numeric_update(&last);
        }
        const Tensor target = policy_probs(agent_.policy().params(), last.obs);
        outer = bmg_outer_loss_ac(pi, target, last.obs);
      }
      m.outer_loss = outer.value().item();
      if (!std::isfinite(m.outer_loss)) throw NumericFault("non-finite outer loss");
      meta_step(params_, outer, cfg_.meta.meta_lr);
      m.meta_step = true;
    }

    m.env_step = steps_;
    m.task_index = env_.task_index();
    m.steps = steps_ - steps_before;
    m.reward_sum = reward_total_ - reward_before;
    m.mean_rollout_reward = m.reward_sum / static_cast<double>(m.steps);
    m.meta = last_meta_;
    return m;
  }

 private:
  struct Prepared {
    agents::RolloutBatch batch;
    std::vector<double> ctx;
    double mean_reward = 0;
  };

  MetaParameter make_param(const std::string& name, bool tuned, double fixed_value, double range) {
    if (!tuned) return MetaParameter::fixed(name, fixed_value);
    if (cfg_.context.enabled()) {
      context::MetaNet net(cfg_.context.dim(), cfg_.meta_hidden, range, init_rng_);
      net.pretrain(init_rng_);
      return MetaParameter::contextual(name, std::move(net), cfg_.meta_adam);
    }
    return MetaParameter::free(name, 0.5 * range, 0.0, range, cfg_.meta_adam);
  }

  /// Collects one rollout with the current policy and refreshes the context.
  Prepared prepare() {
    Prepared out;
    const std::size_t T = cfg_.agent.rollout;
    const std::size_t D = env_.obs_dim();
    auto& b = out.batch;
    b.obs = Tensor(Shape{T, D});
    std::vector<std::vector<double>> probs;
    for (std::size_t t = 0; t < T; ++t) {
      const auto obs = env_.observe();
      std::copy(obs.begin(), obs.end(), b.obs.values().begin() + static_cast<std::ptrdiff_t>(t * D));
      b.cells.push_back(env_.agent_cell());
      auto p = agent_.probs(obs);
      const int a = agents::sample(p, rng_);
      probs.push_back(std::move(p));
      const auto tr = env_.step(a);
      ++steps_;
      reward_total_ += tr.reward;
      b.actions.push_back(a);
      b.rewards.push_back(tr.reward);
      b.continuations.push_back(tr.continuation);
      if (t + 1 == T) b.last_next = Tensor(Shape{1, D}, tr.next_obs);
      out.mean_reward += tr.reward / static_cast<double>(T);
    }
    if (tracker_) {
      context::ACUpdateStats s;
      s.rewards = b.rewards;
      s.values = diff::Mlp::forward(agent_.value().params(), agents::stack_rows(b.obs, b.last_next)).values();
      s.continuations = b.continuations;
      s.probs = std::move(probs);
      s.cells = b.cells;
      s.gamma = cfg_.agent.gamma;
      s.grad_cosine = grads_.size() == 2 ? context::cosine_distance(grads_[0], grads_[1]) : 0.0;
      s.prev_meta = prev_meta_;
      tracker_->push_raw(context::ac_raw_frame(tracker_->spec(), s));
      out.ctx = tracker_->current();
    }
    return out;
  }

  void finish_update(const Prepared& prep, std::vector<double> meta, std::vector<double> grad) {
    grads_.push_back(std::move(grad));
    if (grads_.size() > 2) grads_.erase(grads_.begin());
    prev_meta_.clear();
    for (std::size_t k = 0; k < params_.size(); ++k)
      if (params_[k].learnable()) prev_meta_.push_back(meta[k]);
    last_meta_ = meta;
    if (on_inner) on_inner(InnerLog{steps_, env_.task_index(), prep.mean_reward, std::move(meta)});
  }

  /// One inner update with the meta-parameters evaluated numerically.
  double numeric_update(agents::RolloutBatch* keep = nullptr) {
    Prepared prep = prepare();
    std::vector<double> meta{params_[0].value(prep.ctx), params_[1].value(prep.ctx)};
    auto st = agent_.update(prep.batch, meta[0], meta[1]);
    finish_update(prep, meta, std::move(st.grad));
    if (keep) *keep = std::move(prep.batch);
    return st.total;
  }

  envs::Environment& env_;
  ACLearnerConfig cfg_;
  std::mt19937_64 init_rng_;
  std::mt19937_64 rng_;
  agents::ActorCritic agent_;
  std::optional<context::ContextTracker> tracker_;
  std::vector<MetaParameter> params_;
  std::vector<std::vector<double>> grads_;
  std::vector<double> prev_meta_;
  std::vector<double> last_meta_;
  std::uint64_t steps_ = 0;
  std::uint64_t iteration_ = 0;
  double reward_total_ = 0;
};

}  // namespace metalab::metaopt
