#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "metalab/agents/actor_critic.hpp"
#include "metalab/agents/q_lambda.hpp"
#include "test_util.hpp"

using namespace metalab;
using namespace metalab::agents;
using metalab::testing::close;
using metalab::testing::random_tensor;

namespace {

void zero_params(Mlp& m) {
  for (auto& p : m.params())
    for (auto& v : p.values()) v = 0.0;
}

RolloutBatch random_batch(std::mt19937_64& rng, std::size_t T, std::size_t obs_dim, std::size_t A) {
  RolloutBatch b;
  b.obs = random_tensor({T, obs_dim}, rng);
  b.last_next = random_tensor({1, obs_dim}, rng);
  std::uniform_int_distribution<int> act(0, static_cast<int>(A) - 1);
  std::uniform_real_distribution<double> r(-1, 1), u(0, 1);
  for (std::size_t t = 0; t < T; ++t) {
    b.actions.push_back(act(rng));
    b.rewards.push_back(r(rng));
    b.continuations.push_back(u(rng) < 0.2 ? 0.0 : 1.0);
    b.cells.push_back(0);
  }
  return b;
}

double mean_entropy(const Mlp& pi, const Tensor& obs) {
  const Tensor logits = pi.forward(obs);
  double h = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::vector<double> row(logits.values().begin() + static_cast<std::ptrdiff_t>(i * logits.cols()),
                            logits.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * logits.cols()));
    for (double p : softmax(row)) h -= p * std::log(p);
  }
  return h / static_cast<double>(logits.rows());
}

/// Direct per-element evaluation of the Peng recursion, one start index at a time.
double peng_naive(const std::vector<double>& r, const std::vector<double>& c, const std::vector<double>& m,
                  double lambda, double gamma, std::size_t t) {
  const double tail = t + 1 < r.size() ? peng_naive(r, c, m, lambda, gamma, t + 1) : m[t];
  return r[t] + gamma * c[t] * (lambda * tail + (1 - lambda) * m[t]);
}

}  // namespace

TEST(Policy, EpsilonGreedyExamples) {
  const std::vector<double> q{0.1, 0.7, 0.3, 0.7};
  auto greedy = epsilon_greedy(q, 0.0);
  EXPECT_EQ(greedy, (std::vector<double>{0, 1, 0, 0}));  // tie goes to index 1
  for (double p : epsilon_greedy(q, 1.0)) EXPECT_DOUBLE_EQ(p, 0.25);
  auto p = epsilon_greedy(q, 0.2);
  EXPECT_NEAR(p[1], 0.85, 1e-15);
  EXPECT_NEAR(p[0], 0.05, 1e-15);
  EXPECT_NEAR(p[2], 0.05, 1e-15);
  EXPECT_THROW(epsilon_greedy(q, 1.5), UsageError);
}

TEST(Policy, SoftmaxIsNormalizedForRandomLogits) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(4);
    for (auto& l : logits) l = u(rng);
    auto p = softmax(logits);
    double s = 0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  auto sharp = softmax(std::vector<double>{100, 0, 0, 0});
  EXPECT_NEAR(sharp[0], 1.0, 1e-15);
  EXPECT_LT(sharp[1], 1e-40);
}

TEST(Policy, SampledFrequenciesMatchTheDistribution) {
  std::mt19937_64 rng(3);
  const std::vector<double> p{0.1, 0.4, 0.15, 0.35};
  std::vector<double> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(sample(p, rng))] += 1;
  for (std::size_t a = 0; a < 4; ++a) EXPECT_NEAR(counts[a] / n, p[a], 0.01);

  std::vector<double> q{0.2, -1.0, 3.0, 0.5};
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(QLambda::act(q, 0.0, rng), 2);
  auto sharp = softmax(std::vector<double>{100, 0, 0, 0});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample(sharp, rng), 0);
}

TEST(Policy, SeededActingIsDeterministic) {
  std::mt19937_64 init(5);
  ActorCritic ac(6, 4, ACConfig{{8}, 0.1, 0.99, 16}, init);
  const std::vector<double> obs{1, 0, 0, 1, 0, 0};
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ac.act(obs, a), ac.act(obs, b));
}

TEST(Returns, PengCollapsesToOneStepWhenLambdaIsZero) {
  const std::vector<double> r{1, 0, -1}, c{1, 1, 1}, m{0.5, 2.0, -0.3};
  auto G = peng_q_targets(r, c, m, 0.0, 0.9);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(G[t], r[t] + 0.9 * m[t]);
}

TEST(Returns, PengWithLambdaOneIsTheSuffixSum) {
  const std::vector<double> r{1, 2, 3, 4}, c{1, 1, 1, 1}, m{7, 7, 7, 0};
  auto G = peng_q_targets(r, c, m, 1.0, 1.0);
  EXPECT_EQ(G, (std::vector<double>{10, 9, 7, 4}));
}

TEST(Returns, PengThreeStepHandOracle) {
  // q-table rows for s1, s2, s3 (the successor states).
  const double q1[4] = {0.2, 0.5, -0.1, 0.0}, q2[4] = {1.0, 0.3, 0.3, 0.9}, q3[4] = {-0.4, -0.2, -0.8, -0.3};
  const double m1 = 0.5, m2 = 1.0, m3 = -0.2;
  EXPECT_EQ(*std::max_element(q1, q1 + 4), m1);
  EXPECT_EQ(*std::max_element(q2, q2 + 4), m2);
  EXPECT_EQ(*std::max_element(q3, q3 + 4), m3);
  const double l = 0.9, g = 0.99;
  const std::vector<double> r{0.3, -1.0, 0.7};
  const double G2 = 0.7 + g * m3;
  const double G1 = -1.0 + g * (l * G2 + (1 - l) * m2);
  const double G0 = 0.3 + g * (l * G1 + (1 - l) * m1);
  auto G = peng_q_targets(r, std::vector<double>{1, 1, 1}, std::vector<double>{m1, m2, m3}, l, g);
  EXPECT_NEAR(G[0], G0, 1e-14);
  EXPECT_NEAR(G[1], G1, 1e-14);
  EXPECT_NEAR(G[2], G2, 1e-14);
}

TEST(Returns, PengMatchesNaiveRecursionOnRandomTrajectories) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1), p(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + static_cast<std::size_t>(p(rng) * 20);
    std::vector<double> r(T), c(T), m(T);
    for (std::size_t t = 0; t < T; ++t) {
      r[t] = u(rng);
      c[t] = p(rng) < 0.2 ? 0.0 : 1.0;
      m[t] = u(rng) * 3;
    }
    const double lambda = p(rng), gamma = p(rng);
    auto G = peng_q_targets(r, c, m, lambda, gamma);
    for (std::size_t t = 0; t < T; ++t) EXPECT_NEAR(G[t], peng_naive(r, c, m, lambda, gamma, t), 1e-12);
  }
  EXPECT_THROW(peng_q_targets({}, {}, {}, 0.9, 0.99), UsageError);
}

TEST(Returns, ContinuationBreakIsolatesEarlierTargets) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 12, cut = 4 + static_cast<std::size_t>(trial % 6);
    std::vector<double> r(T), c(T, 1.0), m(T);
    for (std::size_t t = 0; t < T; ++t) {
      r[t] = u(rng);
      m[t] = u(rng);
    }
    c[cut] = 0.0;
    auto G = peng_q_targets(r, c, m, 0.9, 0.99);
    auto N = nstep_returns(r, c, 0.99, u(rng));
    auto r2 = r, m2 = m;
    for (std::size_t t = cut + 1; t < T; ++t) {
      r2[t] = u(rng);
      m2[t] = u(rng);
    }
    m2[cut] = u(rng);  // the bootstrap at a break is masked too
    auto G2 = peng_q_targets(r2, c, m2, 0.9, 0.99);
    auto N2 = nstep_returns(r2, c, 0.99, u(rng) + 5);
    for (std::size_t t = 0; t <= cut; ++t) {
      EXPECT_EQ(G[t], G2[t]);
      EXPECT_EQ(N[t], N2[t]);
    }
  }
}

TEST(ActorCritic, InnerLossSingleTransitionExample) {
  std::mt19937_64 rng(1);
  ActorCritic ac(5, 4, ACConfig{{8, 8}, 0.1, 0.0, 1}, rng);
  zero_params(ac.policy());
  zero_params(ac.value());
  RolloutBatch b;
  b.obs = Tensor(Shape{1, 5}, {1, 0, 0, 1, 0});
  b.last_next = Tensor(Shape{1, 5}, {0, 1, 0, 0, 1});
  b.actions = {2};
  b.rewards = {1.0};
  b.continuations = {1.0};
  Tape tape;
  auto pi = ac.policy().record(tape);
  auto v = ac.value().record(tape);
  auto loss = ac_inner_loss(pi, v, b, tape.constant(0.0), tape.constant(0.0), 0.0);
  EXPECT_NEAR(loss.policy.value().item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(loss.value.value().item(), 0.5, 1e-12);
  EXPECT_NEAR(loss.total.value().item(), std::log(4.0) + 0.5, 1e-12);
}

TEST(ActorCritic, InnerLossUniformEntropyExample) {
  std::mt19937_64 rng(1);
  ActorCritic ac(5, 4, ACConfig{{8, 8}, 0.1, 0.99, 3}, rng);
  zero_params(ac.policy());
  zero_params(ac.value());
  RolloutBatch b;
  b.obs = Tensor(Shape{3, 5}, 0.5);
  b.last_next = Tensor(Shape{1, 5}, 0.5);
  b.actions = {0, 1, 3};
  b.rewards = {0, 0, 0};
  b.continuations = {1, 0, 1};
  Tape tape;
  auto pi = ac.policy().record(tape);
  auto v = ac.value().record(tape);
  auto loss = ac_inner_loss(pi, v, b, tape.constant(1.0), tape.constant(1e-4), 0.99);
  EXPECT_NEAR(loss.total.value().item(), -std::log(4.0), 1e-12);
}

TEST(ActorCritic, InnerLossGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    ActorCritic ac(6, 4, ACConfig{{8, 8}, 0.1, 0.99, 16}, rng);
    auto batch = random_batch(rng, 16, 6, 4);
    const double ae = 0.3, al = 1e-2;
    Tape tape;
    auto pi = ac.policy().record(tape);
    auto v = ac.value().record(tape);
    std::vector<Var> all(pi);
    all.insert(all.end(), v.begin(), v.end());
    auto loss = ac_inner_loss(pi, v, batch, tape.constant(ae), tape.constant(al), 0.99);
    auto grads = tape.gradients(loss.total, all);

    // Returns and advantages are constants taken at the unperturbed parameters.
    auto eval = [&](std::size_t k, std::size_t i, double delta) {
      Tape t2;
      std::vector<Var> p2, v2;
      for (std::size_t j = 0; j < all.size(); ++j) {
        Tensor x = all[j].value();
        if (j == k) x[i] += delta;
        (j < pi.size() ? p2 : v2).push_back(t2.variable(std::move(x)));
      }
      const auto targets = ac_targets(values_of(v), batch, 0.99);
      auto pt = policy_terms(p2, batch.obs, batch.actions, targets.advantages);
      Var vv = diff::reshape(Mlp::forward(v2, t2.constant(batch.obs)), Shape{16});
      Var G = t2.constant(Tensor(Shape{16}, targets.returns));
      std::vector<Var> a2(p2);
      a2.insert(a2.end(), v2.begin(), v2.end());
      Var total = pt.policy_loss + diff::scale(diff::sum(diff::square(vv - G)), 0.5 / 16) +
                  diff::scale(pt.neg_entropy, ae) + diff::scale(l2_norm_sq(a2), al);
      return total.value().item();
    };
    std::uniform_int_distribution<std::size_t> pick_k(0, all.size() - 1);
    for (int probe = 0; probe < 12; ++probe) {
      const std::size_t k = pick_k(rng);
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, all[k].value().size() - 1)(rng);
      const double h = 1e-5;
      const double fd = (eval(k, i, h) - eval(k, i, -h)) / (2 * h);
      EXPECT_TRUE(close(grads[k][i], fd, 1e-5, 1e-8)) << grads[k][i] << " vs " << fd;
    }
  }
}

TEST(ActorCritic, ZeroGradientBatchLeavesParametersUnchanged) {
  std::mt19937_64 rng(4);
  ActorCritic ac(5, 4, ACConfig{{8}, 0.1, 0.99, 4}, rng);
  zero_params(ac.policy());
  zero_params(ac.value());
  auto before_pi = ac.policy().params();
  auto before_v = ac.value().params();
  RolloutBatch b = random_batch(rng, 4, 5, 4);
  std::fill(b.rewards.begin(), b.rewards.end(), 0.0);
  ac.update(b, 0.0, 1e-4);
  EXPECT_EQ(ac.policy().params(), before_pi);
  EXPECT_EQ(ac.value().params(), before_v);
}

TEST(ActorCritic, OneUpdateReducesTheLossOnTheSameBatch) {
  std::mt19937_64 rng(12);
  int failures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ActorCritic ac(6, 4, ACConfig{{8, 8}, 0.1, 0.99, 16}, rng);
    auto batch = random_batch(rng, 16, 6, 4);
    auto loss_at = [&](const ActorCritic& agent) {
      Tape t;
      auto pi = agent.policy().record(t);
      auto v = agent.value().record(t);
      // Hold the targets of the pre-update parameters fixed for a like-for-like comparison.
      auto targets = ac_targets(ac.value().params(), batch, 0.99);
      auto pt = policy_terms(pi, batch.obs, batch.actions, targets.advantages);
      Var vv = diff::reshape(Mlp::forward(v, t.constant(batch.obs)), Shape{16});
      Var G = t.constant(Tensor(Shape{16}, targets.returns));
      std::vector<Var> all(pi);
      all.insert(all.end(), v.begin(), v.end());
      return (pt.policy_loss + diff::scale(diff::sum(diff::square(vv - G)), 0.5 / 16) +
              diff::scale(pt.neg_entropy, 0.1) + diff::scale(l2_norm_sq(all), 1e-4))
          .value()
          .item();
    };
    ActorCritic after = ac;
    const double before = loss_at(ac);
    after.update(batch, 0.1, 1e-4);
    failures += loss_at(after) >= before;
  }
  EXPECT_LE(failures, 2);
}

TEST(ActorCritic, RecordedUpdateIsDifferentiableInTheEntropyWeight) {
  std::mt19937_64 rng(6);
  ActorCritic ac(6, 4, ACConfig{{8}, 0.1, 0.99, 16}, rng);
  auto batch = random_batch(rng, 16, 6, 4);
  Tape tape;
  auto pi = ac.policy().record(tape);
  auto v = ac.value().record(tape);
  Var ae = tape.variable(Tensor::scalar(0.2));
  auto up = ac_update(pi, v, batch, ae, tape.constant(0.0), ac.config());
  auto g = tape.gradients(diff::sum(up.pi[0]), std::vector<Var>{ae});
  EXPECT_NE(g[0].item(), 0.0);

  // The recorded and numeric updates agree.
  ActorCritic copy = ac;
  copy.update(batch, 0.2, 0.0);
  for (std::size_t k = 0; k < up.pi.size(); ++k)
    for (std::size_t i = 0; i < up.pi[k].value().size(); ++i)
      EXPECT_NEAR(up.pi[k].value()[i], copy.policy().params()[k][i], 1e-14);
}

TEST(ActorCritic, LargerEntropyWeightYieldsHigherEntropyAfterOneUpdate) {
  std::mt19937_64 rng(77);
  int wins = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    ActorCritic ac(6, 4, ACConfig{{16, 16}, 0.1, 0.99, 16}, rng);
    auto batch = random_batch(rng, 16, 6, 4);
    ActorCritic low = ac, high = ac;
    low.update(batch, 0.0, 0.0);
    high.update(batch, 0.5, 0.0);
    wins += mean_entropy(high.policy(), batch.obs) > mean_entropy(low.policy(), batch.obs);
  }
  EXPECT_GE(wins, 90);
}

TEST(QLambda, GradientEmaConvergesGeometrically) {
  std::mt19937_64 rng(2);
  QConfig cfg;
  cfg.hidden = {8};
  cfg.lr = 0.0;  // parameters frozen, so the raw gradient is constant
  QLambda q(3, 4, cfg, rng);
  const std::vector<double> obs{1, 0, 0};
  Tape tape;
  auto params = q.net().record(tape);
  Var out = Mlp::forward(params, tape.constant(Tensor(Shape{1, 3}, obs)));
  Tensor pick(out.shape(), 0.0);
  pick[1] = 1.0;
  Var loss = diff::scale(diff::square(diff::add_scalar(diff::sum(out * tape.constant(pick)), -2.0)), 0.5);
  auto g = tape.gradients(loss, params);
  for (int n = 1; n <= 30; ++n) {
    q.q_update(obs, 1, 2.0);
    const double factor = 1 - std::pow(0.9, n);
    for (std::size_t k = 0; k < g.size(); ++k)
      for (std::size_t i = 0; i < g[k].size(); ++i) EXPECT_NEAR(q.gradient_ema()[k][i], factor * g[k][i], 1e-12);
  }
}

TEST(QLambda, MatchedTargetsShrinkTheUpdate) {
  std::mt19937_64 rng(2);
  QConfig cfg;
  cfg.hidden = {8};
  cfg.lr = 1e-3;
  QLambda q(3, 4, cfg, rng);
  const std::vector<double> obs{0, 1, 0};
  for (int i = 0; i < 50; ++i) q.q_update(obs, 0, 1.0);
  auto norm = [](const std::vector<Tensor>& ts) {
    double s = 0;
    for (const auto& t : ts)
      for (double v : t.values()) s += v * v;
    return std::sqrt(s);
  };
  double prev_ema = norm(q.gradient_ema());
  double prev_step = 1e300;
  for (int i = 0; i < 40; ++i) {
    auto before = q.net().params();
    const double target = q.q_values(obs)[0];
    auto info = q.q_update(obs, 0, target);
    EXPECT_EQ(info.loss, 0.0);
    const double e = norm(q.gradient_ema());
    EXPECT_NEAR(e, 0.9 * prev_ema, 1e-12);
    prev_ema = e;
    std::vector<Tensor> delta;
    for (std::size_t k = 0; k < before.size(); ++k) {
      Tensor d = q.net().params()[k];
      for (std::size_t j = 0; j < d.size(); ++j) d[j] -= before[k][j];
      delta.push_back(std::move(d));
    }
    const double step = norm(delta);
    EXPECT_LT(step, prev_step);
    prev_step = step;
  }
}

TEST(QLambda, ConvergesOnFixedRegressionTargets) {
  std::mt19937_64 rng(10);
  QConfig cfg;
  cfg.hidden = {16, 16};
  cfg.lr = 1e-3;
  QLambda q(3, 4, cfg, rng);
  const std::vector<std::vector<double>> states{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const std::vector<int> actions{0, 2, 3};
  const std::vector<double> targets{1.0, -0.5, 0.3};
  for (int i = 0; i < 1000; ++i) q.q_update(states[i % 3], actions[i % 3], targets[i % 3]);
  for (std::size_t s = 0; s < 3; ++s) {
    const double err = q.q_values(states[s])[static_cast<std::size_t>(actions[s])] - targets[s];
    EXPECT_LT(0.5 * err * err, 1e-3) << s;
  }
}

TEST(QLambda, WindowDelaysUpdatesAndUsesPengTargets) {
  std::mt19937_64 rng(14);
  QConfig cfg;
  cfg.hidden = {8};
  cfg.window = 4;
  QLambda q(3, 4, cfg, rng);
  std::vector<QStep> steps;
  for (int t = 0; t < 4; ++t)
    steps.push_back(QStep{{1.0 * (t % 3 == 0), 1.0 * (t % 3 == 1), 1.0 * (t % 3 == 2)}, t % 4, 0.25 * t,
                          t == 2 ? 0.0 : 1.0, 0.1 * t});
  for (int t = 0; t < 3; ++t) EXPECT_FALSE(q.observe(steps[static_cast<std::size_t>(t)]).has_value());
  auto info = q.observe(steps[3]);
  ASSERT_TRUE(info.has_value());
  std::vector<double> r, c, m;
  for (const auto& s : steps) {
    r.push_back(s.reward);
    c.push_back(s.continuation);
    m.push_back(s.next_max_q);
  }
  EXPECT_DOUBLE_EQ(info->target, peng_q_targets(r, c, m, 0.9, 0.99)[0]);
  EXPECT_EQ(q.pending().size(), 3u);
}
