#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metalab/context/features.hpp"
#include "metalab/errors.hpp"

namespace metalab::metaopt {

enum class Objective { None, MG, BMG };

inline const char* objective_name(Objective o) {
  switch (o) {
    case Objective::None: return "none";
    case Objective::MG: return "mg";
    case Objective::BMG: return "bmg";
  }
  return "?";
}

struct MetaConfig {
  Objective objective = Objective::None;
  std::size_t K = 1;  // updates differentiated through
  std::size_t L = 8;  // target length, BMG only
  double alpha_outer_ent = 0.0;
  double meta_lr = 1e-4;

  void validate(bool q_learner) const {
    if (!(meta_lr > 0)) throw UsageError("meta_lr must be positive");
    if (objective == Objective::MG && K < 1) throw UsageError("MG needs K >= 1");
    if (objective == Objective::BMG && L < 1) throw UsageError("BMG needs L >= 1");
    if (q_learner && objective == Objective::MG) throw UsageError("Q(lambda) supports only the BMG objective");
    if (q_learner && objective == Objective::BMG && L < 2)
      throw UsageError("BMG for Q(lambda) needs L >= 2 so the target differs from the current q");
    if (!q_learner && objective == Objective::BMG && K < 1) throw UsageError("BMG for actor-critic needs K >= 1");
  }
};

/// Meta-parameter values used by one inner update.
struct InnerLog {
  std::uint64_t env_step = 0;
  std::uint64_t task_index = 0;
  double mean_reward = 0;
  std::vector<double> meta;
};

struct IterationMetrics {
  std::uint64_t outer_iteration = 0;
  std::uint64_t env_step = 0;
  std::uint64_t task_index = 0;
  std::uint64_t steps = 0;  // env steps taken in this iteration
  double reward_sum = 0;
  double mean_rollout_reward = 0;
  std::vector<double> meta;
  double inner_loss = 0;
  double outer_loss = 0;
  bool meta_step = false;
};

/// A single-stream learner advanced one outer iteration at a time.
class Learner {
 public:
  virtual ~Learner() = default;

  /// Runs one outer iteration using at most `budget` environment steps.
  virtual IterationMetrics iterate(std::uint64_t budget) = 0;
  virtual std::uint64_t env_steps() const = 0;
  /// Environment steps one full outer iteration consumes.
  virtual std::uint64_t steps_per_iteration() const = 0;
  virtual std::vector<std::string> meta_names() const = 0;
  virtual const context::FeatureSpec* context_spec() const = 0;
  /// Prediction of the first tuned meta-parameter for a context input.
  virtual double probe(const std::vector<double>& ctx) const = 0;

  std::function<void(const InnerLog&)> on_inner;
};

}  // namespace metalab::metaopt
