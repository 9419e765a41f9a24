// Trains AC-BMG with a reward context on Two Colors and prints, for every
// task, the mean reward and the mean entropy weight just before and just
// after the switch, followed by the learned meta-function on the probe inputs.

#include <cstdio>
#include <map>

#include "metalab/context/probes.hpp"
#include "metalab/envs/two_colors.hpp"
#include "metalab/metaopt/ac_learner.hpp"

using namespace metalab;

int main(int argc, char** argv) {
  const std::uint64_t period = 20000, lifetime = argc > 1 ? std::stoull(argv[1]) : 200000, window = 4000;
  envs::TwoColors env(1, period);

  metaopt::ACLearnerConfig cfg;
  cfg.agent = agents::ACConfig{{32, 32}, 0.1, 0.99, 16};
  cfg.meta.objective = metaopt::Objective::BMG;
  cfg.meta.K = 1;
  cfg.meta.L = 8;
  cfg.meta.meta_lr = 1e-3;
  cfg.context.families = {context::Family::Reward};
  cfg.context.history = 10;
  cfg.context.include_std = true;
  cfg.meta_hidden = {32, 32};
  metaopt::ACLearner learner(env, cfg, 2, 3);

  struct Bin {
    double reward = 0, alpha = 0;
    std::size_t n = 0;
  };
  std::map<std::uint64_t, Bin> early, late;  // keyed by task index
  learner.on_inner = [&](const metaopt::InnerLog& log) {
    const std::uint64_t into = (log.env_step - 1) % period;
    Bin* b = into < window ? &early[log.task_index] : into >= period - window ? &late[log.task_index] : nullptr;
    if (!b) return;
    b->reward += log.mean_reward;
    b->alpha += log.meta[0];
    ++b->n;
  };
  while (learner.env_steps() < lifetime) learner.iterate(lifetime - learner.env_steps());

  std::printf("%5s %14s %14s %14s %14s\n", "task", "reward first", "alpha first", "reward last", "alpha last");
  for (const auto& [task, e] : early) {
    const Bin& l = late[task];
    auto avg = [](double s, std::size_t n) { return n ? s / static_cast<double>(n) : 0.0; };
    std::printf("%5llu %14.4f %14.4f %14.4f %14.4f\n", static_cast<unsigned long long>(task), avg(e.reward, e.n),
                avg(e.alpha, e.n), avg(l.reward, l.n), avg(l.alpha, l.n));
  }
  std::printf("\nalpha_ent on probe inputs\n");
  for (const auto& p : context::probe_inputs(*learner.context_spec()))
    std::printf("  %-11s %.5f\n", std::string(p.name).c_str(), learner.probe(p.input));
}
