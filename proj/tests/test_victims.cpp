#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ricl/attackers.hpp"
#include "ricl/victims.hpp"

using namespace ricl;

// Victims can only ever be handed rewards they observed.
template <class T>
concept ExposesCleanReward = requires(T t) { t.clean_reward; };
template <class T>
concept ExposesPoisonFlag = requires(T t) { t.poisoned; };
static_assert(!ExposesCleanReward<VictimTransition>);
static_assert(!ExposesPoisonFlag<VictimTransition>);

namespace {

std::vector<double> iota_values(int n) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  return v;
}

// Regret of a clean run, read off at step `first` and at the end.
std::pair<double, double> split_regret(Agent& agent, const Task& task, int first, std::uint64_t seed) {
  RolloutStreams streams = RolloutStreams::derive(seed, 0, 0);
  const EpisodeTrace trace = run_episode(agent, task, nullptr, 0.0, streams);
  const std::span<const int> acts(trace.actions);
  return {cumulative_regret(task, acts.first(first)), cumulative_regret(task, acts)};
}

}  // namespace

TEST(TrimmedMean, DropsOneFromEachEnd) {
  const auto v = iota_values(10);
  const TrimmedMean m = trimmed_mean(v, 0.1);
  EXPECT_FALSE(m.degenerate);
  EXPECT_NEAR(m.value, 4.5, 1e-9);
}

TEST(TrimmedMean, ZeroAlphaIsArithmeticMean) {
  const std::vector<double> v{3.0, -1.0, 8.5, 2.25};
  EXPECT_NEAR(trimmed_mean(v, 0.0).value, (3.0 - 1.0 + 8.5 + 2.25) / 4.0, 1e-9);
}

TEST(TrimmedMean, SingleValueWithLargeAlphaIsDegenerate) {
  const std::vector<double> v{5.0};
  const TrimmedMean m = trimmed_mean(v, 0.3);
  EXPECT_TRUE(m.degenerate);
  EXPECT_EQ(m.value, 0.0);
  EXPECT_TRUE(trimmed_mean(std::vector<double>{}, 0.1).degenerate);
}

TEST(TrimmedMean, PermutationInvariantAndBounded) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(5 + trial % 17);
    for (double& x : v) x = rng.normal();
    const double alpha = 0.05 * (trial % 8);
    const TrimmedMean a = trimmed_mean(v, alpha);
    std::vector<double> shuffled = v;
    std::reverse(shuffled.begin(), shuffled.end());
    std::rotate(shuffled.begin(), shuffled.begin() + trial % shuffled.size(), shuffled.end());
    EXPECT_EQ(a.value, trimmed_mean(shuffled, alpha).value);
    if (a.degenerate) continue;
    std::sort(v.begin(), v.end());
    const auto cut = static_cast<std::size_t>(std::ceil(alpha * v.size()));
    EXPECT_GE(a.value, v[cut] - 1e-12);
    EXPECT_LE(a.value, v[v.size() - 1 - cut] + 1e-12);
  }
}

TEST(CrUcb, ModifiedBonusHandValue) {
  const CrUcbConfig cfg{0.25, 1.0, CrUcbVariant::kModified};
  const double h = std::exp(2.0);
  EXPECT_NEAR(crucb_bonus(8, h, cfg), std::sqrt(2.0), 1e-9);
}

TEST(CrUcb, OriginalAndLowSigmaHandValues) {
  const double h = std::exp(2.0);
  // sigma0 / (1 - 2 alpha) * sqrt(4 log h / N) = 1 / 0.5 * sqrt(8 / 8) = 2
  EXPECT_NEAR(crucb_bonus(8, h, {0.25, 1.0, CrUcbVariant::kOriginal}), 2.0, 1e-9);
  EXPECT_NEAR(crucb_bonus(8, h, {0.25, 1.0, CrUcbVariant::kLowSigma0}), 2.0 * std::sqrt(0.5), 1e-9);
}

TEST(CrUcb, ModifiedSinglePullIsInfinite) {
  EXPECT_TRUE(std::isinf(crucb_bonus(1, 10.0, {0.4, 0.08, CrUcbVariant::kModified})));
  EXPECT_TRUE(std::isinf(crucb_bonus(0, 10.0, {0.4, 0.08, CrUcbVariant::kOriginal})));
}

TEST(CrUcb, VariantsCoincideWithoutTrimming) {
  for (int n : {1, 3, 10, 57}) {
    EXPECT_NEAR(crucb_bonus(n, 40.0, {0.0, 0.3, CrUcbVariant::kModified}),
                crucb_bonus(n, 40.0, {0.0, 0.3, CrUcbVariant::kOriginal}), 1e-12);
  }
}

TEST(CrUcb, ScoresFiniteAndDecreasingInPulls) {
  for (auto variant : {CrUcbVariant::kOriginal, CrUcbVariant::kLowSigma0, CrUcbVariant::kModified}) {
    for (double alpha : {0.0, 0.1, 0.25, 0.4}) {
      const CrUcbConfig cfg{alpha, 0.5, variant};
      const int n0 = static_cast<int>(std::ceil(1.0 / (1.0 - 2.0 * alpha)));
      double previous = kInf;
      for (int n = n0; n < 200; ++n) {
        // Zero rewards keep the trimmed estimate at 0, so only the bonus
        // varies with n.
        ArmStatistics stats(1);
        for (int k = 0; k < n; ++k) stats.record(0, 0.0);
        const double score = crucb_scores(stats, 500, cfg)[0];
        if (variant == CrUcbVariant::kModified && trimmed_mean(stats.rewards[0], alpha).degenerate) {
          // The modified variant forces another pull while nothing survives trimming.
          EXPECT_TRUE(std::isinf(score)) << "n=" << n << " alpha=" << alpha;
          continue;
        }
        ASSERT_TRUE(std::isfinite(score)) << "n=" << n << " alpha=" << alpha;
        EXPECT_LE(score, previous);
        previous = score;
      }
    }
  }
}

TEST(CrUcb, ScoresDecreaseWithNonDegenerateTrimming) {
  const CrUcbConfig cfg{0.1, 0.5, CrUcbVariant::kModified};
  double previous = kInf;
  // From n = 3 on, trimming 10% per side leaves at least one value.
  for (int n = 3; n < 100; ++n) {
    ArmStatistics stats(1);
    for (int k = 0; k < n; ++k) stats.record(0, 0.3);
    const double score = crucb_scores(stats, 300, cfg)[0];
    EXPECT_NEAR(score, 0.3 + crucb_bonus(n, 300, cfg), 1e-12);
    EXPECT_LE(score, previous + 1e-12);
    previous = score;
  }
}

TEST(Rts, UnknownRegimeBound) {
  EXPECT_NEAR(rts_bound(RtsRegime::kUnknown, 500, 5), std::sqrt(500 * std::log(5.0) / 5), 1e-12);
  EXPECT_NEAR(rts_bound(RtsRegime::kUnknown, 500, 5), 12.7, 0.05);
}

TEST(Rts, TunedAndKnownRegimes) {
  EXPECT_EQ(rts_bound(RtsRegime::kTuned, 500, 5), 0.5);
  const std::vector<double> zeros(50, 0.0);
  EXPECT_EQ(rts_bound(RtsRegime::kKnown, 500, 5, zeros), 0.0);
  const std::vector<double> trace{0.5, -1.0, 0.25};
  EXPECT_NEAR(rts_bound(RtsRegime::kKnown, 500, 5, trace), 1.75, 1e-12);
  EXPECT_THROW(rts_bound(RtsRegime::kKnown, 500, 5), std::invalid_argument);
}

TEST(Ucb1, PlaysEveryArmOnceInOrder) {
  Ucb1 ucb(5);
  Rng rng(0);
  for (int a = 0; a < 5; ++a) {
    EXPECT_EQ(ucb.act(0, a, rng), a);
    ucb.observe({0, a, 0.1 * (5 - a), 0});
  }
}

TEST(ThompsonSampling, ConvergesOnTwoArms) {
  const Task task = BanditTask{{0.2, 0.8}, 0.3, 500};
  double frac = 0.0;
  for (int run = 0; run < 100; ++run) {
    ThompsonSampling ts(2);
    RolloutStreams streams = RolloutStreams::derive(run, 0, 0);
    const EpisodeTrace trace = run_episode(ts, task, nullptr, 0.0, streams);
    frac += std::count(trace.actions.end() - 100, trace.actions.end(), 1) / 100.0;
  }
  EXPECT_GT(frac / 100.0, 0.9);
}

TEST(BanditVictims, RegretIsSublinear) {
  VictimSettings settings;
  settings.rts_known_bound = 120.0;
  for (VictimId id : {VictimId::kTs, VictimId::kUcb, VictimId::kRtsTuned, VictimId::kCrUcbModified}) {
    double first = 0.0, total = 0.0;
    Rng task_rng(31);
    for (int i = 0; i < 100; ++i) {
      const Task task = sample_bandit_task(5, task_rng, 0.3, 1000);
      auto agent = make_classical_victim(id, task, settings);
      const auto [r1, r2] = split_regret(*agent, task, 500, 1000 + i);
      first += r1;
      total += r2;
    }
    EXPECT_LT(total / first, 2.0) << to_string(id);
  }
}

TEST(LinUcb, OneDimensionalDominantActionWins) {
  const FeatureMatrix features{{1.0}, {0.5}, {-0.3}};
  const std::vector<double> omega{1.0};
  LinUcb agent(features, 0.3);
  Rng rng(0);
  for (int h = 0; h < 60; ++h) {
    const int a = agent.act(0, h, rng);
    if (h >= 3) {
      EXPECT_EQ(a, 0) << "h=" << h;
    }
    agent.observe({0, a, features[a][0] * omega[0], 0});
  }
}

TEST(CrLinUcb, VariantBudgets) {
  EXPECT_NEAR(geometric_mean(100.0, 1.0), 10.0, 1e-12);
  const double v1 = crlinucb_config(CrLinUcbVariant::kV1, 0.4, 3.0, 200).budget_bound;
  const double v2 = crlinucb_config(CrLinUcbVariant::kV2, 0.4, 3.0, 200).budget_bound;
  const double v3 = crlinucb_config(CrLinUcbVariant::kV3, 0.4, 3.0, 200).budget_bound;
  EXPECT_NEAR(v1, 240.0, 1e-9);
  EXPECT_NEAR(v2, 1.2, 1e-12);
  EXPECT_NEAR(v3, std::sqrt(240.0 * 1.2), 1e-9);
}

TEST(QLearning, ZeroLearningRateLeavesTableUntouched) {
  Rng rng(1);
  const Task task = sample_darkroom2_task(5, rng, 50);
  QLearningConfig cfg;
  cfg.learning_rate = 0.0;
  QLearning agent(25, 5, cfg);
  for (int e = 0; e < 5; ++e) q_learning_episode(agent, task, rng);
  for (double q : agent.table()) EXPECT_EQ(q, 0.0);
}

TEST(QLearning, TwoStateChainMatchesValueIteration) {
  // State 0 / 1; action 0 stays, action 1 switches; landing in 1 pays 1.
  auto next = [](int s, int a) { return a == 0 ? s : 1 - s; };
  auto reward = [](int s2) { return s2 == 1 ? 1.0 : 0.0; };
  const double gamma = 0.9;
  double v[2] = {0, 0};
  for (int it = 0; it < 2000; ++it) {
    double nv[2];
    for (int s = 0; s < 2; ++s) {
      nv[s] = -1e9;
      for (int a = 0; a < 2; ++a) nv[s] = std::max(nv[s], reward(next(s, a)) + gamma * v[next(s, a)]);
    }
    v[0] = nv[0];
    v[1] = nv[1];
  }
  auto oracle = [&](int s) {
    double best = -1e9;
    int arg = 0;
    for (int a = 0; a < 2; ++a) {
      const double q = reward(next(s, a)) + gamma * v[next(s, a)];
      if (q > best) best = q, arg = a;
    }
    return arg;
  };

  QLearning agent(2, 2, {0.3, gamma, 1.0, 0.05, 100});
  Rng rng(3);
  for (int e = 0; e < 300; ++e) {
    int s = static_cast<int>(rng.index(2));
    agent.begin_episode(s);
    for (int h = 0; h < 20; ++h) {
      const int a = agent.act(s, h, rng);
      const int s2 = next(s, a);
      agent.observe({s, a, reward(s2), s2});
      s = s2;
    }
    agent.end_episode();
  }
  for (int s = 0; s < 2; ++s) EXPECT_EQ(agent.greedy_action(s), oracle(s));
}

TEST(QLearning, SmallGridMatchesValueIterationValues) {
  Darkroom2Task room;
  room.grid_side = 3;
  room.goal1 = {0, 0};
  room.goal2 = {2, 1};
  room.start = {1, 1};
  room.horizon = 30;
  const Task task = room;
  const double gamma = 0.9;
  const auto policy = value_iteration_policy(task, gamma);

  // Optimal values by the same Bellman backup, for comparing action quality.
  std::vector<double> v(9, 0.0);
  Rng probe(0);
  for (int it = 0; it < 1000; ++it) {
    std::vector<double> nv(9, -1e9);
    for (int s = 0; s < 9; ++s) {
      for (int a = 0; a < 5; ++a) {
        const int s2 = step(task, s, a, probe).next_state;
        nv[s] = std::max(nv[s], mean_reward(task, s, a) + gamma * v[s2]);
      }
    }
    v = nv;
  }

  QLearning agent(9, 5, {0.3, gamma, 1.0, 0.05, 300});
  Rng rng(5);
  for (int e = 0; e < 2000; ++e) {
    int s = static_cast<int>(rng.index(9));
    agent.begin_episode(s);
    for (int h = 0; h < room.horizon; ++h) {
      const int a = agent.act(s, h, rng);
      const StepResult r = step(task, s, a, rng);
      agent.observe({s, a, r.reward, r.next_state});
      s = r.next_state;
    }
    agent.end_episode();
  }
  for (int s = 0; s < 9; ++s) {
    auto q_of = [&](int a) { return mean_reward(task, s, a) + gamma * v[step(task, s, a, probe).next_state]; };
    EXPECT_NEAR(q_of(agent.greedy_action(s)), q_of(policy[s]), 1e-9) << "state " << s;
  }
}

TEST(Npg, ZeroStepSizeLeavesPolicyUntouched) {
  Rng rng(2);
  const Task task = sample_darkroom2_task(5, rng, 50);
  NaturalPolicyGradient agent(25, 5, {0.0, 0.9, 0.3});
  for (int e = 0; e < 5; ++e) npg_episode(agent, task, rng);
  for (double th : agent.logits()) EXPECT_EQ(th, 0.0);
}

TEST(Npg, RewardedActionProbabilityNeverDrops) {
  NaturalPolicyGradient agent(1, 2, {0.1, 0.9, 0.3});
  Rng rng(8);
  double previous = agent.probabilities(0)[0];
  for (int e = 0; e < 300; ++e) {
    agent.begin_episode(0);
    const int a = agent.act(0, 0, rng);
    agent.observe({0, a, a == 0 ? 1.0 : 0.0, 0});
    agent.end_episode();
    const double p = agent.probabilities(0)[0];
    EXPECT_GE(p, previous - 1e-15);
    previous = p;
  }
  EXPECT_GT(previous, 0.9);
}

TEST(Registry, NamesRoundTripAndAliasesResolve) {
  for (int i = 0; i <= static_cast<int>(VictimId::kQLearning); ++i) {
    const auto id = static_cast<VictimId>(i);
    EXPECT_EQ(parse_victim_id(to_string(id)), id);
  }
  EXPECT_EQ(parse_victim_id("RTS"), VictimId::kRtsTuned);
  EXPECT_EQ(parse_victim_id("crUCB"), VictimId::kCrUcbModified);
  EXPECT_EQ(parse_victim_id("DPT"), VictimId::kDptFrozen);
  EXPECT_THROW(parse_victim_id("SARSA"), std::invalid_argument);
}

TEST(Registry, ClassicalFactoryRejectsTransformerIds) {
  const Task task = BanditTask{{0.1, 0.5}, 0.3, 10};
  VictimSettings settings;
  EXPECT_THROW(make_classical_victim(VictimId::kAtDpt, task, settings), std::invalid_argument);
  EXPECT_THROW(make_classical_victim(VictimId::kRtsKnown, task, settings), std::invalid_argument);
  settings.rts_known_bound = 120.0;
  EXPECT_NE(make_classical_victim(VictimId::kRtsKnown, task, settings), nullptr);
}
