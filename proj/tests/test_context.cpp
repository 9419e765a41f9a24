#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "metalab/context/buffer.hpp"
#include "metalab/context/meta_net.hpp"
#include "metalab/context/probes.hpp"

using namespace metalab;
using namespace metalab::context;

namespace {

FeatureSpec all_features(std::size_t H) {
  FeatureSpec s;
  s.families = {Family::Value, Family::Reward, Family::TdError, Family::ActionProbs,
                Family::GradCosine, Family::PrevMeta, Family::States};
  s.history = H;
  return s;
}

FeatureSpec reward_only(std::size_t H, bool with_std = false) {
  FeatureSpec s;
  s.families = {Family::Reward};
  s.history = H;
  s.include_std = with_std;
  return s;
}

}  // namespace

TEST(FeatureSpec, DimensionAudit) {
  EXPECT_EQ(all_features(10).dim(), 660u);
  EXPECT_EQ(all_features(4).dim(), 264u);

  FeatureSpec rich;
  rich.families = {Family::Reward, Family::Value, Family::TdError};
  EXPECT_EQ(rich.dim(), 60u);
  EXPECT_EQ(reward_only(10).dim(), 10u);

  FeatureSpec q;
  q.learner = LearnerKind::QLambda;
  q.history = 100;
  q.families = {Family::Reward};
  EXPECT_EQ(q.dim(), 100u);
  q.families = {Family::Reward, Family::Value, Family::TdError};
  EXPECT_EQ(q.dim(), 300u);
  q.families = {Family::States};
  EXPECT_THROW(q.dim(), UsageError);

  FeatureSpec two = all_features(10);
  two.num_meta = 2;
  EXPECT_EQ(two.dim(), 670u);

  FeatureSpec dup = reward_only(4);
  dup.families.push_back(Family::Reward);
  EXPECT_THROW(dup.validate(), UsageError);
  EXPECT_EQ(parse_family("td_error"), Family::TdError);
  EXPECT_THROW(parse_family("rewards"), UsageError);
}

TEST(Features, RawFrameExamples) {
  FeatureSpec spec = all_features(10);
  ACUpdateStats s;
  s.rewards.assign(16, 1.0);
  s.values.assign(17, 0.5);
  s.continuations.assign(16, 1.0);
  s.probs.assign(16, std::vector<double>{0.25, 0.25, 0.25, 0.25});
  s.cells.assign(16, 3);
  s.grad_cosine = 0.3;
  s.prev_meta = {0.7};
  auto f = ac_raw_frame(spec, s);
  ASSERT_EQ(f.size(), spec.frame_dim());
  // Family order: value, reward, td_error, action_probs, grad_cosine, prev_meta, states.
  EXPECT_DOUBLE_EQ(f[0], 0.5);
  EXPECT_DOUBLE_EQ(f[1], 0.0);
  EXPECT_DOUBLE_EQ(f[2], 1.0);
  EXPECT_DOUBLE_EQ(f[3], 0.0);
  EXPECT_NEAR(f[4], 1.0 + 0.99 * 0.5 - 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(f[6], 0.25);
  EXPECT_DOUBLE_EQ(f[14], 0.3);
  EXPECT_DOUBLE_EQ(f[15], 0.7);
  EXPECT_DOUBLE_EQ(f[16 + 2 * 3], 1.0);  // visitation mean of cell 3
  EXPECT_DOUBLE_EQ(f[16 + 2 * 4], 0.0);

  std::vector<double> g{1, -2, 3};
  EXPECT_NEAR(cosine_distance(g, g), 0.0, 1e-15);
  EXPECT_NEAR(cosine_distance(g, {-1, 2, -3}), 2.0, 1e-15);
  EXPECT_EQ(cosine_distance(g, {0, 0, 0}), 0.0);

  EXPECT_NEAR(q_td_error(0.5, 1.0, 0.99, 1.0, 1.0), 0.49, 1e-15);
  FeatureSpec q;
  q.learner = LearnerKind::QLambda;
  q.families = {Family::TdError, Family::Reward};
  EXPECT_EQ(q_raw_frame(q, {0.5, 1.0, 0.49}), (std::vector<double>{0.49, 0.5}));
}

TEST(Normalizer, Examples) {
  RunningNormalizer n(1);
  EXPECT_EQ(n.normalize({0.0})[0], 0.0);
  n.update({-1.0});
  n.update({1.0});
  EXPECT_DOUBLE_EQ(n.mean(0), 0.0);
  EXPECT_DOUBLE_EQ(n.variance(0), 1.0);
  EXPECT_NEAR(n.normalize({1.0})[0], std::tanh(1.0), 1e-8);
  EXPECT_NEAR(std::tanh(1.0), 0.7616, 1e-4);
  EXPECT_THROW(n.normalize({1.0, 2.0}), StructuralError);
}

TEST(Normalizer, StreamingMatchesTwoPassStatistics) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 3, N = 2 + rng() % 500;
    std::normal_distribution<double> d(std::uniform_real_distribution<double>(-100, 100)(rng), 1 + rng() % 50);
    RunningNormalizer norm(C);
    std::vector<std::vector<double>> xs(N, std::vector<double>(C));
    for (auto& x : xs) {
      for (auto& v : x) v = d(rng);
      norm.update(x);
    }
    for (std::size_t c = 0; c < C; ++c) {
      double m = 0;
      for (const auto& x : xs) m += x[c];
      m /= static_cast<double>(N);
      double v = 0;
      for (const auto& x : xs) v += (x[c] - m) * (x[c] - m);
      v /= static_cast<double>(N);
      EXPECT_NEAR(norm.mean(c), m, 1e-9 * std::abs(m) + 1e-12);
      EXPECT_NEAR(norm.variance(c), v, 1e-9 * v);
      EXPECT_GE(norm.variance(c), 0.0);
    }
  }
}

TEST(Normalizer, OutputsStayInsideTheOpenUnitIntervalAndConstantsGoToZero) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  RunningNormalizer n(4);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x{u(rng), u(rng) * 1e-6, 3.0, u(rng)};
    for (double v : n.normalize_then_update(x)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  RunningNormalizer c(1);
  double last = 1;
  for (int i = 0; i < 100; ++i) last = c.normalize_then_update({7.5})[0];
  EXPECT_EQ(last, 0.0);
}

TEST(ContextBuffer, ZeroFillNewestFirstAndEviction) {
  FeatureSpec spec;
  spec.families = {Family::Reward, Family::GradCosine};
  spec.history = 3;
  ContextBuffer buf(spec);
  EXPECT_EQ(buf.flatten(), std::vector<double>(9, 0.0));
  buf.push({0.1, 0.2, 0.3});
  buf.push({0.4, 0.5, 0.6});
  // reward family (2 channels x 3 slots), then grad_cosine (1 x 3).
  EXPECT_EQ(buf.flatten(), (std::vector<double>{0.4, 0.5, 0.1, 0.2, 0, 0, 0.6, 0.3, 0}));
  buf.push({0.7, 0.8, 0.9});
  buf.push({-0.1, -0.2, -0.3});
  EXPECT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.flatten(), (std::vector<double>{-0.1, -0.2, 0.7, 0.8, 0.4, 0.5, -0.3, 0.9, 0.6}));
  EXPECT_THROW(buf.push({1.0}), StructuralError);
}

TEST(ContextBuffer, TrackedEntriesStayInRange) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d(0, 100);
  FeatureSpec spec = all_features(4);
  ContextTracker tr(spec);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> raw(spec.frame_dim());
    for (auto& v : raw) v = d(rng);
    tr.push_raw(raw);
    auto c = tr.current();
    ASSERT_EQ(c.size(), spec.dim());
    for (double v : c) {
      ASSERT_GE(v, -1.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(MetaNet, ZeroFinalLayerGivesHalfScale) {
  std::mt19937_64 rng(1);
  MetaNet net(10, {16, 16}, 1e-4, rng);
  for (auto& v : net.params()[4].values()) v = 0;
  for (auto& v : net.params()[5].values()) v = 0;
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> c(10);
  for (auto& v : c) v = u(rng);
  EXPECT_EQ(net.predict(c), 0.5e-4);
}

TEST(MetaNet, PretrainingCentersPredictions) {
  std::mt19937_64 rng(2);
  MetaNet ent(60, {64, 64}, 1.0, rng);
  auto res = ent.pretrain(rng);
  EXPECT_TRUE(res.converged);
  MetaNet l2(60, {64, 64}, 1e-4, rng);
  l2.pretrain(rng);

  std::mt19937_64 probe(3);
  std::uniform_real_distribution<double> u(-1, 1);
  double err = 0, l2_mean = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> c(60);
    for (auto& v : c) v = u(probe);
    const double p = ent.predict(c);
    EXPECT_GE(p, 0.4);
    EXPECT_LE(p, 0.6);
    err += std::abs(p - 0.5);
    const double q = l2.predict(c);
    EXPECT_GT(q, 0.0);
    EXPECT_LT(q, 1e-4);
    l2_mean += q;
  }
  EXPECT_LT(err / 1000, 0.02);
  EXPECT_NEAR(l2_mean / 1000, 5e-5, 0.02e-4);
}

TEST(MetaNet, PretrainingIsDeterministic) {
  auto run = [] {
    std::mt19937_64 rng(44);
    MetaNet net(30, {32, 32}, 1.0, rng);
    net.pretrain(rng);
    return net.params();
  };
  EXPECT_EQ(run(), run());
}

TEST(MetaNet, ContextIsGradientStopped) {
  std::mt19937_64 rng(9);
  MetaNet net(6, {8, 8}, 1.0, rng);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor ctx(Shape{1, 6});
  for (auto& v : ctx.values()) v = u(rng);

  Tape tape;
  Var c = tape.variable(ctx);
  auto omega = net.mlp().record(tape);
  Var out = diff::sum(net.predict(omega, c.value()));
  std::vector<Var> wrt(omega);
  wrt.push_back(c);
  auto g = tape.gradients(out, wrt);
  for (double v : g.back().values()) EXPECT_EQ(v, 0.0);
  double omega_norm = 0;
  for (std::size_t k = 0; k + 1 < g.size(); ++k)
    for (double v : g[k].values()) omega_norm += v * v;
  EXPECT_GT(omega_norm, 0.0);

  auto perturbed = ctx.values();
  perturbed[0] += 0.5;
  EXPECT_NE(net.predict(ctx.values()), net.predict(perturbed));
  EXPECT_NEAR(out.value().item(), net.predict(ctx.values()), 1e-15);
}

TEST(Probes, PatternsAndMeans) {
  auto probes = probe_inputs(reward_only(3));
  ASSERT_EQ(probes.size(), 5u);
  auto find = [&](std::string_view n) {
    for (auto& p : probes)
      if (p.name == n) return p.input;
    return std::vector<double>{};
  };
  auto inc = find("increasing");
  // newest first in storage, so temporal order is reversed
  EXPECT_EQ((std::vector<double>{inc[2], inc[1], inc[0]}), (std::vector<double>{-1, 0, 1}));
  auto dec = find("decreasing");
  EXPECT_EQ((std::vector<double>{dec[2], dec[1], dec[0]}), (std::vector<double>{1, 0, -1}));

  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  EXPECT_EQ(mean(find("high")), 1.0);
  EXPECT_EQ(mean(find("low")), -1.0);
  EXPECT_EQ(mean(find("zero")), 0.0);
  EXPECT_NEAR(mean(find("increasing")), 0.0, 1e-15);
  EXPECT_NEAR(mean(find("decreasing")), 0.0, 1e-15);
}

TEST(Probes, StdChannelsAndOtherFamiliesStayZero) {
  FeatureSpec spec;
  spec.families = {Family::Value, Family::Reward};
  spec.history = 4;
  auto probes = probe_inputs(spec);
  for (const auto& p : probes) {
    ASSERT_EQ(p.input.size(), 16u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(p.input[i], 0.0);
    for (std::size_t h = 0; h < 4; ++h) EXPECT_EQ(p.input[8 + 2 * h + 1], 0.0);
  }
  EXPECT_EQ(probes[0].input[8], 1.0);
  EXPECT_THROW(probe_inputs(FeatureSpec{}), UsageError);

  std::mt19937_64 rng(1);
  MetaNet net(spec.dim(), {8}, 1.0, rng);
  const auto before = net.params();
  for (const auto& p : probes) (void)net.predict(p.input);
  EXPECT_EQ(net.params(), before);
}
