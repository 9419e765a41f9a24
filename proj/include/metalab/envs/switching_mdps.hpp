#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "metalab/envs/environment.hpp"
#include "metalab/errors.hpp"

namespace metalab::envs {

inline constexpr int kMaxWalls = 15;

/// Random gridworld: dense per-(state, action) rewards and up to 15 walls.
struct GridMDP {
  int width = 10;
  int height = 10;
  std::vector<char> wall;      // per cell
  std::vector<double> reward;  // [cell * kNumActions + action]
  Cell start;
  Cell goal;

  std::size_t cells() const { return static_cast<std::size_t>(width * height); }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y * width + c.x); }
  bool is_wall(Cell c) const { return wall[index(c)] != 0; }
  double r(Cell c, int action) const { return reward[index(c) * kNumActions + static_cast<std::size_t>(action)]; }
  std::size_t wall_count() const {
    std::size_t n = 0;
    for (char w : wall) n += w != 0;
    return n;
  }
};

/// Reward entry: 0 w.p. 0.5, +1 w.p. 0.2, -1 w.p. 0.2, else uniform on [-1, 1].
template <class Rng>
double sample_reward_entry(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p = u(rng);
  if (p < 0.5) return 0.0;
  if (p < 0.7) return 1.0;
  if (p < 0.9) return -1.0;
  return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
}

template <class Rng>
GridMDP generate_mdp(Rng& rng, int width, int height) {
  if (width <= 0 || height <= 0 || width * height <= kMaxWalls + 2)
    throw UsageError("grid " + std::to_string(width) + "x" + std::to_string(height) + " is too small for walls");
  GridMDP m;
  m.width = width;
  m.height = height;
  const int n = width * height;
  m.wall.assign(static_cast<std::size_t>(n), 0);
  auto cell = [width](int i) { return Cell{i % width, i / width}; };

  std::vector<char> occupied(static_cast<std::size_t>(n), 0);
  auto sample_free = [&]() {
    std::vector<int> free;
    for (int i = 0; i < n; ++i)
      if (!occupied[static_cast<std::size_t>(i)]) free.push_back(i);
    const int pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    occupied[static_cast<std::size_t>(pick)] = 1;
    return pick;
  };
  m.start = cell(sample_free());
  m.goal = cell(sample_free());
  const int walls = std::uniform_int_distribution<int>(0, kMaxWalls)(rng);
  for (int w = 0; w < walls; ++w) m.wall[static_cast<std::size_t>(sample_free())] = 1;

  m.reward.resize(static_cast<std::size_t>(n) * kNumActions);
  for (auto& r : m.reward) r = sample_reward_entry(rng);
  return m;
}

struct SwitchingSchedule {
  std::uint64_t period = 100000;
  std::size_t n_mdps = 4;
  std::uint64_t seed = 0;
};

/// Movement is blocked by walls and edges; the reward is read from the
/// (state, action) table of the MDP in force. The task never terminates.
inline std::pair<Transition, Cell> switching_step(const GridMDP& mdp, Cell agent, int action) {
  if (action < 0 || action >= kNumActions) throw UsageError("action " + std::to_string(action) + " out of range");
  Transition tr;
  tr.action = action;
  tr.reward = mdp.r(agent, action);
  Cell next = move(agent, action, mdp.width, mdp.height);
  if (mdp.is_wall(next)) next = agent;
  tr.continuation = 1.0;
  return {std::move(tr), next};
}

inline std::vector<double> grid_observe(const GridMDP& mdp, Cell agent) {
  std::vector<double> obs(static_cast<std::size_t>(mdp.width + mdp.height), 0.0);
  obs[static_cast<std::size_t>(agent.x)] = 1.0;
  obs[static_cast<std::size_t>(mdp.width + agent.y)] = 1.0;
  return obs;
}

/// A set of N MDPs generated up front; every `period` steps the next one is
/// drawn uniformly with replacement. Set and draw order depend only on the seed.
class SwitchingMdps final : public Environment {
 public:
  SwitchingMdps(const SwitchingSchedule& schedule, int width, int height)
      : schedule_(schedule), draw_rng_(schedule.seed ^ 0x9e3779b97f4a7c15ULL) {
    if (schedule.period == 0) throw UsageError("switching period must be positive");
    if (schedule.n_mdps == 0) throw UsageError("need at least one MDP");
    std::mt19937_64 gen(schedule.seed);
    for (std::size_t i = 0; i < schedule.n_mdps; ++i) mdps_.push_back(generate_mdp(gen, width, height));
    current_ = draw();
    agent_ = mdps_[current_].start;
  }

  std::size_t obs_dim() const override { return static_cast<std::size_t>(mdp().width + mdp().height); }
  std::vector<double> observe() const override { return grid_observe(mdp(), agent_); }
  Transition step(int action) override {
    auto obs = observe();
    auto [tr, next] = switching_step(mdp(), agent_, action);
    agent_ = next;
    ++steps_;
    if (steps_ % schedule_.period == 0) {
      current_ = draw();
      ++switches_;
      if (mdp().is_wall(agent_)) agent_ = mdp().start;
    }
    tr.obs = std::move(obs);
    tr.next_obs = observe();
    return std::move(tr);
  }
  std::size_t num_cells() const override { return mdp().cells(); }
  std::size_t agent_cell() const override { return mdp().index(agent_); }
  std::uint64_t task_index() const override { return switches_; }
  std::uint64_t steps() const override { return steps_; }

  const GridMDP& mdp() const { return mdps_[current_]; }
  const std::vector<GridMDP>& mdps() const { return mdps_; }
  std::size_t current_mdp() const { return current_; }
  Cell agent() const { return agent_; }

 private:
  std::size_t draw() { return std::uniform_int_distribution<std::size_t>(0, mdps_.size() - 1)(draw_rng_); }

  SwitchingSchedule schedule_;
  std::mt19937_64 draw_rng_;
  std::vector<GridMDP> mdps_;
  std::size_t current_ = 0;
  Cell agent_;
  std::uint64_t steps_ = 0;
  std::uint64_t switches_ = 0;
};

}  // namespace metalab::envs
