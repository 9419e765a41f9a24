#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

#include "metalab/envs/switching_mdps.hpp"
#include "metalab/envs/two_colors.hpp"

using namespace metalab;
using namespace metalab::envs;

TEST(TwoColors, ObservationLayout) {
  TwoColorsState s;
  s.agent = {0, 0};
  s.obj_a = {1, 1};
  s.obj_b = {2, 2};
  auto obs = two_colors_observe(s);
  ASSERT_EQ(obs.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) {
    const bool one = i == 0 || i == 5 || i == 11 || i == 16 || i == 22 || i == 27;
    EXPECT_EQ(obs[i], one ? 1.0 : 0.0) << i;
  }
  std::swap(s.obj_a, s.obj_b);
  EXPECT_NE(two_colors_observe(s), obs);
}

TEST(TwoColors, PickupRewardsAndRespawn) {
  std::mt19937_64 rng(1);
  TwoColorsState s;
  s.agent = {2, 2};
  s.obj_a = {3, 2};
  s.obj_b = {0, 0};
  auto [tr, next] = two_colors_step(s, kRight, rng);
  EXPECT_EQ(tr.reward, 1.0);
  EXPECT_EQ(tr.continuation, 0.0);
  EXPECT_NE(next.agent, next.obj_a);
  EXPECT_NE(next.agent, next.obj_b);
  EXPECT_NE(next.obj_a, next.obj_b);
  EXPECT_EQ(tr.next_obs, two_colors_observe(next));

  s.rewarding = RewardingObject::B;
  auto [tr2, next2] = two_colors_step(s, kRight, rng);
  EXPECT_EQ(tr2.reward, -1.0);

  auto [tr3, next3] = two_colors_step(s, kUp, rng);
  EXPECT_EQ(tr3.reward, 0.0);
  EXPECT_EQ(tr3.continuation, 1.0);
  EXPECT_EQ(next3.agent, (Cell{2, 1}));
}

TEST(TwoColors, MovesClampAtEdgesAndBadActionsThrow) {
  std::mt19937_64 rng(1);
  TwoColorsState s;
  s.agent = {0, 0};
  s.obj_a = {4, 4};
  s.obj_b = {3, 4};
  EXPECT_EQ(two_colors_step(s, kUp, rng).second.agent, (Cell{0, 0}));
  EXPECT_EQ(two_colors_step(s, kLeft, rng).second.agent, (Cell{0, 0}));
  EXPECT_THROW(two_colors_step(s, 4, rng), UsageError);
  EXPECT_THROW(two_colors_step(s, -1, rng), UsageError);
}

TEST(TwoColors, RewardingObjectFlipsExactlyAtPeriodMultiples) {
  TwoColors env(3, 1000);
  std::mt19937_64 act(4);
  std::uniform_int_distribution<int> a(0, 3);
  auto rewarding = env.state().rewarding;
  for (std::uint64_t t = 1; t <= 10000; ++t) {
    env.step(a(act));
    const bool flipped = env.state().rewarding != rewarding;
    EXPECT_EQ(flipped, t % 1000 == 0) << t;
    rewarding = env.state().rewarding;
    EXPECT_EQ(env.task_index(), t / 1000);
  }
}

TEST(TwoColors, SignFlipsAfterDefaultPeriod) {
  std::mt19937_64 rng(8);
  TwoColorsState s = two_colors_initial(rng, 100000);
  s.steps_since_switch = 99999;
  s.agent = {0, 0};
  s.obj_a = {4, 4};
  s.obj_b = {4, 3};
  auto after = two_colors_step(s, kUp, rng).second;  // the 100000th step
  EXPECT_EQ(after.rewarding, RewardingObject::B);
  after.agent = {2, 4};
  after.obj_a = {3, 4};
  after.obj_b = {0, 0};
  EXPECT_EQ(two_colors_step(after, kRight, rng).first.reward, -1.0);
}

TEST(TwoColors, RespawnsAreAlwaysDistinctAndObservationsHaveSixOnes) {
  std::mt19937_64 rng(123);
  TwoColorsState s;
  for (int i = 0; i < 10000; ++i) {
    two_colors_respawn(s, rng);
    ASSERT_NE(s.agent, s.obj_a);
    ASSERT_NE(s.agent, s.obj_b);
    ASSERT_NE(s.obj_a, s.obj_b);
    auto obs = two_colors_observe(s);
    ASSERT_EQ(std::accumulate(obs.begin(), obs.end(), 0.0), 6.0);
  }
}

TEST(TwoColors, SeedDeterminism) {
  auto trajectory = [] {
    TwoColors env(77, 5000);
    std::mt19937_64 act(1);
    std::uniform_int_distribution<int> a(0, 3);
    std::vector<double> rs;
    for (int t = 0; t < 100000; ++t) rs.push_back(env.step(a(act)).reward + 3.0 * static_cast<double>(env.agent_cell()));
    return rs;
  };
  EXPECT_EQ(trajectory(), trajectory());
}

TEST(SwitchingMdps, RewardDistributionFollowsTheMixture) {
  std::mt19937_64 rng(2022);
  std::size_t zeros = 0, plus = 0, minus = 0, interior = 0, total = 0;
  while (total < 100000) {
    auto m = generate_mdp(rng, 10, 10);
    for (double r : m.reward) {
      ASSERT_GE(r, -1.0);
      ASSERT_LE(r, 1.0);
      zeros += r == 0.0;
      plus += r == 1.0;
      minus += r == -1.0;
      interior += r != 0.0 && r > -1.0 && r < 1.0;
      ++total;
    }
  }
  const double n = static_cast<double>(total);
  EXPECT_NEAR(zeros / n, 0.5, 0.01);
  EXPECT_NEAR(plus / n, 0.2, 0.01);
  EXPECT_NEAR(minus / n, 0.2, 0.01);
  EXPECT_NEAR(interior / n, 0.1, 0.01);
}

TEST(SwitchingMdps, WallsAvoidStartAndGoal) {
  std::mt19937_64 rng(5);
  bool saw_walls = false;
  for (int i = 0; i < 500; ++i) {
    auto m = generate_mdp(rng, 10, 10);
    EXPECT_LE(m.wall_count(), 15u);
    EXPECT_FALSE(m.is_wall(m.start));
    EXPECT_FALSE(m.is_wall(m.goal));
    EXPECT_NE(m.start, m.goal);
    saw_walls |= m.wall_count() > 0;
  }
  EXPECT_TRUE(saw_walls);
}

TEST(SwitchingMdps, GenerationIsDeterministicAndRejectsTinyGrids) {
  std::mt19937_64 a(9), b(9);
  auto m1 = generate_mdp(a, 6, 5);
  auto m2 = generate_mdp(b, 6, 5);
  EXPECT_EQ(m1.reward, m2.reward);
  EXPECT_EQ(m1.wall, m2.wall);
  EXPECT_THROW(generate_mdp(a, 4, 4), UsageError);
  EXPECT_NO_THROW(generate_mdp(a, 6, 3));
}

TEST(SwitchingMdps, WallsBlockMovementButStillPayTheTableReward) {
  std::mt19937_64 rng(3);
  auto m = generate_mdp(rng, 10, 10);
  std::fill(m.wall.begin(), m.wall.end(), 0);
  m.wall[m.index({5, 4})] = 1;
  auto [tr, next] = switching_step(m, {5, 5}, kUp);
  EXPECT_EQ(next, (Cell{5, 5}));
  EXPECT_EQ(tr.reward, m.r({5, 5}, kUp));
  EXPECT_EQ(tr.continuation, 1.0);
  auto [tr2, edge] = switching_step(m, {0, 0}, kLeft);
  EXPECT_EQ(edge, (Cell{0, 0}));
  EXPECT_EQ(switching_step(m, {5, 5}, kDown).second, (Cell{5, 6}));
  EXPECT_THROW(switching_step(m, {0, 0}, 7), UsageError);
}

TEST(SwitchingMdps, SingleMdpNeverChanges) {
  SwitchingMdps env({100, 1, 4}, 10, 10);
  const auto rewards = env.mdp().reward;
  for (int t = 0; t < 1000; ++t) env.step(t % 4);
  EXPECT_EQ(env.mdp().reward, rewards);
  EXPECT_EQ(env.task_index(), 10u);
}

TEST(SwitchingMdps, ScheduleIsReproducibleUnderTheSameSeed) {
  auto draws = [](std::uint64_t seed) {
    SwitchingMdps env({1000, 4, seed}, 10, 10);
    std::vector<std::size_t> seq{env.current_mdp()};
    for (int t = 1; t <= 20000; ++t) {
      auto tr = env.step(t % 4);
      EXPECT_EQ(tr.obs.size(), 20u);
      if (t % 1000 == 0) seq.push_back(env.current_mdp());
      EXPECT_FALSE(env.mdp().is_wall(env.agent()));
    }
    return seq;
  };
  auto a = draws(42), b = draws(42);
  EXPECT_EQ(a, b);
  std::set<std::size_t> distinct(a.begin(), a.end());
  EXPECT_GT(distinct.size(), 1u);
}
