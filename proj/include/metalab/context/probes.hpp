#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "metalab/context/features.hpp"

namespace metalab::context {

inline constexpr std::array<std::string_view, 5> kProbeNames{"high", "increasing", "zero", "decreasing", "low"};

struct Probe {
  std::string_view name;
  std::vector<double> input;
};

/// Canonical reward-history patterns in the flattened context layout. Only the
/// reward-mean channel carries the pattern; every other channel is zero.
inline std::vector<Probe> probe_inputs(const FeatureSpec& spec) {
  std::size_t offset = 0;
  bool found = false;
  for (Family f : spec.families) {
    if (f == Family::Reward) {
      found = true;
      break;
    }
    offset += spec.channels(f) * spec.history;
  }
  if (!found) throw UsageError("probes need a reward context family");
  const std::size_t w = spec.channels(Family::Reward);
  const std::size_t H = spec.history;

  std::vector<Probe> out;
  for (auto name : kProbeNames) {
    std::vector<double> x(spec.dim(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t pos = H - 1 - h;  // temporal position, 0 = oldest
      const double ramp = H == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(pos) / static_cast<double>(H - 1);
      double v = 0.0;
      if (name == "high") v = 1.0;
      else if (name == "low") v = -1.0;
      else if (name == "increasing") v = ramp;
      else if (name == "decreasing") v = -ramp;
      x[offset + h * w] = v;
    }
    out.push_back({name, std::move(x)});
  }
  return out;
}

}  // namespace metalab::context
