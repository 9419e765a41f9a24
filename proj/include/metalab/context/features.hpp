#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "metalab/errors.hpp"

namespace metalab::context {

enum class Family { Reward, Value, TdError, ActionProbs, States, GradCosine, PrevMeta };

enum class LearnerKind { ActorCritic, QLambda };

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::Reward: return "reward";
    case Family::Value: return "value";
    case Family::TdError: return "td_error";
    case Family::ActionProbs: return "action_probs";
    case Family::States: return "states";
    case Family::GradCosine: return "grad_cosine";
    case Family::PrevMeta: return "prev_meta";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  for (Family f : {Family::Reward, Family::Value, Family::TdError, Family::ActionProbs, Family::States,
                   Family::GradCosine, Family::PrevMeta})
    if (family_name(f) == s) return f;
  throw UsageError("unknown context feature family '" + std::string(s) + "'");
}

/// Which statistics feed the meta-network and how many frames are kept.
struct FeatureSpec {
  LearnerKind learner = LearnerKind::ActorCritic;
  std::vector<Family> families;
  std::size_t history = 10;
  bool include_std = true;
  std::size_t num_actions = 4;
  std::size_t num_cells = 25;
  std::size_t num_meta = 1;

  bool enabled() const { return !families.empty(); }

  std::size_t channels(Family f) const {
    const std::size_t per = include_std ? 2 : 1;
    if (learner == LearnerKind::QLambda) {
      if (f == Family::Reward || f == Family::Value || f == Family::TdError) return 1;
      throw UsageError("Q(lambda) context supports only reward, value and td_error");
    }
    switch (f) {
      case Family::Reward:
      case Family::Value:
      case Family::TdError: return per;
      case Family::ActionProbs: return per * num_actions;
      case Family::States: return per * num_cells;
      case Family::GradCosine: return 1;
      case Family::PrevMeta: return num_meta;
    }
    return 0;
  }

  std::size_t frame_dim() const {
    std::size_t d = 0;
    for (Family f : families) d += channels(f);
    return d;
  }

  std::size_t dim() const { return frame_dim() * history; }

  void validate() const {
    if (history == 0) throw UsageError("context history must be positive");
    for (std::size_t i = 0; i < families.size(); ++i)
      for (std::size_t j = i + 1; j < families.size(); ++j)
        if (families[i] == families[j])
          throw UsageError("context family '" + std::string(family_name(families[i])) + "' listed twice");
    (void)frame_dim();
  }
};

/// Summary statistics of one actor-critic rollout, gathered at update time.
struct ACUpdateStats {
  std::vector<double> rewards;
  std::vector<double> values;       // v(s_t) for t = 0..T, the last entry bootstraps
  std::vector<double> continuations;
  std::vector<std::vector<double>> probs;  // pi(.|s_t)
  std::vector<std::size_t> cells;
  double gamma = 0.99;
  double grad_cosine = 0.0;
  std::vector<double> prev_meta;
};

struct QStepStats {
  double reward = 0;
  double q_sa = 0;
  double td_error = 0;
};

/// r + gamma * c * max_a q(s', a) - q(s, a)
inline double q_td_error(double reward, double continuation, double gamma, double next_max_q, double q_sa) {
  return reward + gamma * continuation * next_max_q - q_sa;
}

inline void push_moments(std::vector<double>& out, const std::vector<double>& xs, bool with_std) {
  double m = 0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  out.push_back(m);
  if (!with_std) return;
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  out.push_back(std::sqrt(v / static_cast<double>(xs.size())));
}

/// 1 - cos(a, b); zero when either vector vanishes.
inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw StructuralError("cosine distance of vectors with different lengths");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return 1.0 - ab / std::sqrt(aa * bb);
}

/// Raw (unnormalized) frame for one actor-critic update, channels in family order.
inline std::vector<double> ac_raw_frame(const FeatureSpec& spec, const ACUpdateStats& s) {
  const std::size_t T = s.rewards.size();
  if (T == 0) throw UsageError("context frame needs a non-empty rollout");
  std::vector<double> f;
  f.reserve(spec.frame_dim());
  for (Family fam : spec.families) {
    switch (fam) {
      case Family::Reward: push_moments(f, s.rewards, spec.include_std); break;
      case Family::Value: {
        const std::vector<double> v(s.values.begin(), s.values.begin() + static_cast<std::ptrdiff_t>(T));
        push_moments(f, v, spec.include_std);
        break;
      }
      case Family::TdError: {
        std::vector<double> td(T);
        for (std::size_t t = 0; t < T; ++t)
          td[t] = s.rewards[t] + s.gamma * s.continuations[t] * s.values[t + 1] - s.values[t];
        push_moments(f, td, spec.include_std);
        break;
      }
      case Family::ActionProbs:
        for (std::size_t a = 0; a < spec.num_actions; ++a) {
          std::vector<double> col(T);
          for (std::size_t t = 0; t < T; ++t) col[t] = s.probs[t][a];
          push_moments(f, col, spec.include_std);
        }
        break;
      case Family::States:
        for (std::size_t c = 0; c < spec.num_cells; ++c) {
          std::vector<double> visit(T);
          for (std::size_t t = 0; t < T; ++t) visit[t] = s.cells[t] == c ? 1.0 : 0.0;
          push_moments(f, visit, spec.include_std);
        }
        break;
      case Family::GradCosine: f.push_back(s.grad_cosine); break;
      case Family::PrevMeta:
        if (s.prev_meta.size() != spec.num_meta) throw StructuralError("prev_meta width differs from the spec");
        f.insert(f.end(), s.prev_meta.begin(), s.prev_meta.end());
        break;
    }
  }
  return f;
}

inline std::vector<double> q_raw_frame(const FeatureSpec& spec, const QStepStats& s) {
  std::vector<double> f;
  for (Family fam : spec.families) {
    switch (fam) {
      case Family::Reward: f.push_back(s.reward); break;
      case Family::Value: f.push_back(s.q_sa); break;
      case Family::TdError: f.push_back(s.td_error); break;
      default: throw UsageError("Q(lambda) context supports only reward, value and td_error");
    }
  }
  return f;
}

}  // namespace metalab::context
