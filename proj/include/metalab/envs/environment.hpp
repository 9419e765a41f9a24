#pragma once

#include <cstdint>
#include <vector>

namespace metalab::envs {

enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumActions = 4;

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline Cell move(Cell c, int action, int width, int height) {
  switch (action) {
    case kUp: c.y = c.y > 0 ? c.y - 1 : 0; break;
    case kDown: c.y = c.y + 1 < height ? c.y + 1 : c.y; break;
    case kLeft: c.x = c.x > 0 ? c.x - 1 : 0; break;
    case kRight: c.x = c.x + 1 < width ? c.x + 1 : c.x; break;
    default: break;
  }
  return c;
}

/// One step of experience. continuation is 0 where bootstrapping must stop.
struct Transition {
  std::vector<double> obs;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
  double continuation = 1.0;
};

/// Single-stream environment with scheduled task switches.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t obs_dim() const = 0;
  int num_actions() const { return kNumActions; }
  virtual std::vector<double> observe() const = 0;
  virtual Transition step(int action) = 0;
  /// Number of grid cells and the agent's current cell index (for visitation features).
  virtual std::size_t num_cells() const = 0;
  virtual std::size_t agent_cell() const = 0;
  /// Number of task switches so far.
  virtual std::uint64_t task_index() const = 0;
  virtual std::uint64_t steps() const = 0;
};

}  // namespace metalab::envs
