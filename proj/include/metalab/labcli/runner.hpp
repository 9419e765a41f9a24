#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "metalab/context/probes.hpp"
#include "metalab/envs/switching_mdps.hpp"
#include "metalab/envs/two_colors.hpp"
#include "metalab/labcli/config.hpp"
#include "metalab/metaopt/ac_learner.hpp"
#include "metalab/metaopt/q_learner.hpp"

namespace metalab::labcli {

/// Independent streams for the environment, network initialization and
/// action sampling, derived from one run seed.
struct SubSeeds {
  std::uint64_t env = 0;
  std::uint64_t init = 0;
  std::uint64_t explore = 0;
};

inline SubSeeds derive_seeds(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6d6c6162u};
  std::array<std::uint32_t, 6> out{};
  seq.generate(out.begin(), out.end());
  auto join = [&](std::size_t i) { return (static_cast<std::uint64_t>(out[i]) << 32) | out[i + 1]; };
  return {join(0), join(2), join(4)};
}

/// Shortest decimal that round-trips, independent of locale.
inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline std::string format_number(std::uint64_t v) { return std::to_string(v); }

inline std::unique_ptr<envs::Environment> make_env(const EnvSpec& e, std::uint64_t seed) {
  if (e.kind == EnvKind::TwoColors) return std::make_unique<envs::TwoColors>(seed, e.period);
  return std::make_unique<envs::SwitchingMdps>(envs::SwitchingSchedule{e.period, e.n_mdps, seed}, e.width, e.height);
}

inline std::unique_ptr<metaopt::Learner> make_learner(const ExperimentConfig& c, envs::Environment& env,
                                                      const SubSeeds& s) {
  if (c.agent.kind == AgentKind::ActorCritic)
    return std::make_unique<metaopt::ACLearner>(env, ac_learner_config(c), s.init, s.explore);
  return std::make_unique<metaopt::QLearner>(env, q_learner_config(c), s.init, s.explore);
}

inline std::vector<std::string> meta_column_names(const ExperimentConfig& c) {
  if (c.agent.kind == AgentKind::ActorCritic) return {"alpha_ent", "alpha_l2"};
  return {"epsilon"};
}

inline bool has_probes(const ExperimentConfig& c) {
  const auto& f = c.context.families;
  return std::find(f.begin(), f.end(), context::Family::Reward) != f.end();
}

/// Metrics CSV header; depends only on the configuration.
inline std::vector<std::string> csv_columns(const ExperimentConfig& c) {
  std::vector<std::string> cols{"env_step", "outer_iteration", "mean_rollout_reward", "cumulative_return",
                                "return_per_1e5"};
  for (const auto& m : meta_column_names(c)) cols.push_back(m);
  cols.insert(cols.end(), {"inner_loss", "outer_loss"});
  if (has_probes(c))
    for (auto p : context::kProbeNames) cols.push_back("probe_" + std::string(p));
  cols.emplace_back("task_index");
  return cols;
}

inline std::vector<std::string> inner_csv_columns(const ExperimentConfig& c) {
  std::vector<std::string> cols{"env_step", "task_index", "mean_reward"};
  for (const auto& m : meta_column_names(c)) cols.push_back(m);
  return cols;
}

inline std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

struct RunOptions {
  std::uint64_t log_stride = 1;
  bool log_inner = false;
  std::function<void(const metaopt::InnerLog&)> on_inner;  // called for every inner update
};

struct RunResult {
  std::uint64_t steps = 0;
  double total_return = 0;
  double return_per_1e5 = 0;
  std::string csv;
  std::string inner_csv;           // empty unless inner logging is on
  std::vector<double> final_probes;  // empty without a reward context
};

/// One full lifetime in a single stream. Everything is determined by the
/// configuration and the seed.
inline RunResult run_experiment(const ExperimentConfig& c, std::uint64_t seed, const RunOptions& opt = {}) {
  validate(c);
  if (opt.log_stride == 0) throw UsageError("log stride must be positive");
  const SubSeeds s = derive_seeds(seed);
  auto env = make_env(c.env, s.env);
  auto learner = make_learner(c, *env, s);

  RunResult res;
  res.csv = join_row(csv_columns(c));
  if (opt.log_inner) res.inner_csv = join_row(inner_csv_columns(c));
  learner->on_inner = [&](const metaopt::InnerLog& log) {
    if (opt.on_inner) opt.on_inner(log);
    if (!opt.log_inner) return;
    std::vector<std::string> row{format_number(log.env_step), format_number(log.task_index),
                                 format_number(log.mean_reward)};
    for (double m : log.meta) row.push_back(format_number(m));
    res.inner_csv += join_row(row);
  };

  std::vector<context::Probe> probes;
  if (has_probes(c)) probes = context::probe_inputs(*learner->context_spec());
  auto probe_values = [&]() {
    std::vector<double> out;
    for (const auto& p : probes) out.push_back(learner->probe(p.input));
    return out;
  };

  double total = 0;
  std::uint64_t iteration = 0;
  while (learner->env_steps() < c.env.lifetime) {
    const auto m = learner->iterate(c.env.lifetime - learner->env_steps());
    total += m.reward_sum;
    ++iteration;
    const bool last = learner->env_steps() >= c.env.lifetime;
    if (iteration % opt.log_stride != 0 && !last) continue;
    std::vector<std::string> row{format_number(m.env_step), format_number(m.outer_iteration),
                                 format_number(m.mean_rollout_reward), format_number(total),
                                 format_number(total / static_cast<double>(m.env_step) * 1e5)};
    for (double v : m.meta) row.push_back(format_number(v));
    row.push_back(format_number(m.inner_loss));
    row.push_back(format_number(m.outer_loss));
    if (!probes.empty()) {
      auto pv = probe_values();
      for (double v : pv) row.push_back(format_number(v));
      if (last) res.final_probes = pv;
    }
    row.push_back(format_number(m.task_index));
    res.csv += join_row(row);
  }
  res.steps = learner->env_steps();
  if (res.steps != c.env.lifetime) throw StructuralError("run consumed a different number of steps than its lifetime");
  res.total_return = total;
  res.return_per_1e5 = total / static_cast<double>(res.steps) * 1e5;
  return res;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw UsageError("failed writing '" + path + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace metalab::labcli
