#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "metalab/envs/environment.hpp"
#include "metalab/errors.hpp"

namespace metalab::envs {

inline constexpr int kTwoColorsSize = 5;
inline constexpr std::size_t kTwoColorsObsDim = 3 * 2 * kTwoColorsSize;

enum class RewardingObject : std::uint8_t { A, B };

struct TwoColorsState {
  Cell agent;
  Cell obj_a;
  Cell obj_b;
  RewardingObject rewarding = RewardingObject::A;
  std::uint64_t steps_since_switch = 0;
  std::uint64_t switch_period = 100000;
};

/// One-hot x and y for agent, object A and object B, in that order.
inline std::vector<double> two_colors_observe(const TwoColorsState& s) {
  std::vector<double> obs(kTwoColorsObsDim, 0.0);
  const std::array<Cell, 3> cells{s.agent, s.obj_a, s.obj_b};
  for (std::size_t k = 0; k < 3; ++k) {
    obs[k * 2 * kTwoColorsSize + static_cast<std::size_t>(cells[k].x)] = 1.0;
    obs[k * 2 * kTwoColorsSize + kTwoColorsSize + static_cast<std::size_t>(cells[k].y)] = 1.0;
  }
  return obs;
}

/// Places agent and both objects on three distinct uniformly random cells.
template <class Rng>
void two_colors_respawn(TwoColorsState& s, Rng& rng) {
  constexpr int n = kTwoColorsSize * kTwoColorsSize;
  std::uniform_int_distribution<int> first(0, n - 1), second(0, n - 2), third(0, n - 3);
  int a = first(rng);
  int b = second(rng);
  if (b >= a) ++b;
  int c = third(rng);
  for (int taken : {std::min(a, b), std::max(a, b)})
    if (c >= taken) ++c;
  auto cell = [](int i) { return Cell{i % kTwoColorsSize, i / kTwoColorsSize}; };
  s.agent = cell(a);
  s.obj_a = cell(b);
  s.obj_b = cell(c);
}

template <class Rng>
TwoColorsState two_colors_initial(Rng& rng, std::uint64_t period = 100000) {
  if (period == 0) throw UsageError("two colors switch period must be positive");
  TwoColorsState s;
  s.switch_period = period;
  two_colors_respawn(s, rng);
  return s;
}

/// Picking up the rewarding object yields +1, the other -1; then all three
/// respawn and the transition carries continuation 0. The rewarding object
/// flips every switch_period steps.
template <class Rng>
std::pair<Transition, TwoColorsState> two_colors_step(const TwoColorsState& state, int action, Rng& rng) {
  if (action < 0 || action >= kNumActions) throw UsageError("action " + std::to_string(action) + " out of range");
  TwoColorsState s = state;
  Transition tr;
  tr.obs = two_colors_observe(s);
  tr.action = action;
  s.agent = move(s.agent, action, kTwoColorsSize, kTwoColorsSize);
  const bool on_a = s.agent == s.obj_a, on_b = s.agent == s.obj_b;
  if (on_a || on_b) {
    const bool good = (on_a && s.rewarding == RewardingObject::A) || (on_b && s.rewarding == RewardingObject::B);
    tr.reward = good ? 1.0 : -1.0;
    tr.continuation = 0.0;
    two_colors_respawn(s, rng);
  }
  if (++s.steps_since_switch == s.switch_period) {
    s.rewarding = s.rewarding == RewardingObject::A ? RewardingObject::B : RewardingObject::A;
    s.steps_since_switch = 0;
  }
  tr.next_obs = two_colors_observe(s);
  return {std::move(tr), s};
}

class TwoColors final : public Environment {
 public:
  TwoColors(std::uint64_t seed, std::uint64_t period) : rng_(seed), state_(two_colors_initial(rng_, period)) {}

  std::size_t obs_dim() const override { return kTwoColorsObsDim; }
  std::vector<double> observe() const override { return two_colors_observe(state_); }
  Transition step(int action) override {
    auto [tr, next] = two_colors_step(state_, action, rng_);
    if (next.steps_since_switch == 0) ++switches_;
    state_ = next;
    ++steps_;
    return std::move(tr);
  }
  std::size_t num_cells() const override { return kTwoColorsSize * kTwoColorsSize; }
  std::size_t agent_cell() const override {
    return static_cast<std::size_t>(state_.agent.y * kTwoColorsSize + state_.agent.x);
  }
  std::uint64_t task_index() const override { return switches_; }
  std::uint64_t steps() const override { return steps_; }
  const TwoColorsState& state() const { return state_; }

 private:
  std::mt19937_64 rng_;
  TwoColorsState state_;
  std::uint64_t steps_ = 0;
  std::uint64_t switches_ = 0;
};

}  // namespace metalab::envs
