#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <numeric>

#include "ricl/envs.hpp"

using namespace ricl;

namespace {

// Breadth-first distances over the 5-move grid, independent of the library's
// Manhattan shortcut.
std::vector<int> bfs_distances(int side, Cell goal) {
  std::vector<int> dist(side * side, -1);
  std::deque<Cell> frontier{goal};
  dist[goal.y * side + goal.x] = 0;
  const int dx[] = {0, 0, -1, 1};
  const int dy[] = {-1, 1, 0, 0};
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop_front();
    for (int k = 0; k < 4; ++k) {
      const Cell n{c.x + dx[k], c.y + dy[k]};
      if (n.x < 0 || n.y < 0 || n.x >= side || n.y >= side) continue;
      if (dist[n.y * side + n.x] >= 0) continue;
      dist[n.y * side + n.x] = dist[c.y * side + c.x] + 1;
      frontier.push_back(n);
    }
  }
  return dist;
}

Darkroom2Task room(Cell goal1, Cell goal2, int horizon = 200) {
  Darkroom2Task t;
  t.grid_side = 5;
  t.goal1 = goal1;
  t.goal2 = goal2;
  t.start = {2, 2};
  t.horizon = horizon;
  return t;
}

}  // namespace

TEST(BanditTask, FiveArmsInUnitInterval) {
  Rng rng(3);
  const BanditTask t = sample_bandit_task(5, rng);
  ASSERT_EQ(t.means.size(), 5u);
  for (double m : t.means) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
  EXPECT_DOUBLE_EQ(t.noise_std, 0.3);
}

TEST(BanditTask, SeededTwiceGivesSameMeans) {
  Rng a(42), b(42);
  EXPECT_EQ(sample_bandit_task(5, a).means, sample_bandit_task(5, b).means);
}

TEST(BanditTask, MeansAverageToOneHalf) {
  Rng rng(5);
  double sum = 0.0;
  int n = 0;
  while (n < 100000) {
    for (double m : sample_bandit_task(5, rng).means) {
      sum += m;
      ++n;
    }
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(LinearTask, ShapesMatchRequest) {
  Rng rng(1);
  const LinearBanditTask t = sample_linear_task(10, 2, rng);
  EXPECT_EQ(t.omega.size(), 2u);
  ASSERT_EQ(t.features.size(), 10u);
  for (const auto& row : t.features) EXPECT_EQ(row.size(), 2u);
}

TEST(LinearTask, SeededOmegaIsReproducible) {
  Rng a(9), b(9);
  EXPECT_EQ(sample_linear_task(10, 2, a).omega, sample_linear_task(10, 2, b).omega);
}

TEST(LinearTask, OmegaCoordinateVarianceIsOneOverDim) {
  Rng frng(2);
  const FeatureMatrix features = sample_linear_features(10, 2, frng);
  Rng rng(11);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(sample_linear_task(features, rng).omega[0]);
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / (xs.size() - 1);
  EXPECT_NEAR(var, 0.5, 0.5 * 0.05);
}

TEST(LinearTask, DistributionSharesFeaturesAcrossTasks) {
  Rng frng(4);
  const auto dist = TaskDistribution::linear(10, 2, 200, frng);
  Rng rng(8);
  const auto a = std::get<LinearBanditTask>(dist.sample(rng));
  const auto b = std::get<LinearBanditTask>(dist.sample(rng));
  EXPECT_EQ(a.features, b.features);
  EXPECT_NE(a.omega, b.omega);
}

TEST(Darkroom2, GridHas25StatesAnd5Actions) {
  Rng rng(1);
  const Task t = sample_darkroom2_task(5, rng);
  EXPECT_EQ(num_states(t), 25);
  EXPECT_EQ(num_actions(t), 5);
  EXPECT_EQ(start_state(t), 12);
}

TEST(Darkroom2, GoalsAlwaysDistinct) {
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const Darkroom2Task t = sample_darkroom2_task(5, rng);
    EXPECT_NE(t.goal1, t.goal2);
  }
}

TEST(Darkroom2, GoalCellsRoughlyUniform) {
  Rng rng(3);
  std::vector<int> hist1(25, 0), hist2(25, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Darkroom2Task t = sample_darkroom2_task(5, rng);
    ++hist1[t.state_of(t.goal1)];
    ++hist2[t.state_of(t.goal2)];
  }
  // 0.999 quantile of chi-square with 24 degrees of freedom.
  const double critical = 51.179;
  for (const auto* hist : {&hist1, &hist2}) {
    double chi2 = 0.0;
    for (int c : *hist) chi2 += (c - n / 25.0) * (c - n / 25.0) / (n / 25.0);
    EXPECT_LT(chi2, critical);
  }
}

TEST(Darkroom2, ReachingGoal2PaysTwo) {
  const Task t = room({0, 0}, {3, 2});
  Rng rng(0);
  const StepResult r = step(t, 12, static_cast<int>(Move::kRight), rng);
  EXPECT_EQ(r.next_state, 13);
  EXPECT_DOUBLE_EQ(r.reward, 2.0);
}

TEST(Darkroom2, LeftAtColumnZeroStays) {
  const Task t = room({0, 1}, {4, 4});
  Rng rng(0);
  const StepResult r = step(t, 5, static_cast<int>(Move::kLeft), rng);
  EXPECT_EQ(r.next_state, 5);
  EXPECT_DOUBLE_EQ(r.reward, 1.0);
}

TEST(Darkroom2, StayingOnGoalRepeatsReward) {
  const Task t = room({0, 0}, {2, 2});
  Rng rng(0);
  EXPECT_DOUBLE_EQ(step(t, 12, static_cast<int>(Move::kStay), rng).reward, 2.0);
}

TEST(Darkroom2, EveryMoveStaysInsideGrid) {
  const Task t = room({0, 0}, {4, 4});
  Rng rng(0);
  for (int s = 0; s < 25; ++s) {
    for (int a = 0; a < kNumMoves; ++a) {
      const StepResult r = step(t, s, a, rng);
      EXPECT_GE(r.next_state, 0);
      EXPECT_LT(r.next_state, 25);
      const Cell from{s % 5, s / 5};
      const Cell to{r.next_state % 5, r.next_state / 5};
      EXPECT_LE(std::abs(from.x - to.x) + std::abs(from.y - to.y), 1);
    }
  }
}

TEST(Step, RejectsInvalidAction) {
  Rng rng(0);
  const Task bandit = BanditTask{{0.1, 0.2}, 0.3, 10};
  EXPECT_THROW(step(bandit, 0, 2, rng), std::invalid_argument);
  EXPECT_THROW(step(bandit, 0, -1, rng), std::invalid_argument);
  EXPECT_THROW(step(room({0, 0}, {1, 1}), 0, 5, rng), std::invalid_argument);
}

TEST(Step, BanditPullsAverageToArmMean) {
  const Task t = BanditTask{{0.1, 0.7}, 0.3, 10};
  Rng rng(17);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const StepResult r = step(t, 0, 1, rng);
    EXPECT_EQ(r.next_state, kDummyState);
    sum += r.reward;
  }
  EXPECT_NEAR(sum / 100000, 0.7, 0.01);
}

TEST(OptimalAction, BanditArgmax) {
  EXPECT_EQ(optimal_action(BanditTask{{0.1, 0.9, 0.2, 0.5, 0.3}, 0.3, 10}, 0), 1);
  EXPECT_EQ(optimal_action(BanditTask{{0.4, 0.9, 0.9}, 0.3, 10}, 0), 1);
}

TEST(OptimalAction, LinearDotProductArgmax) {
  LinearBanditTask t;
  t.omega = {1.0, 0.0};
  t.features = {{0.5, 0.2}, {0.9, -0.1}};
  EXPECT_EQ(optimal_action(t, 0), 1);
}

TEST(OptimalAction, Darkroom2HeadsRightTowardGoal2) {
  const Darkroom2Task r = room({0, 0}, {4, 2});
  const Task t = r;
  int s = r.state_of({2, 2});
  EXPECT_EQ(optimal_action(t, s), static_cast<int>(Move::kRight));
  Rng rng(0);
  for (int k = 0; k < 2; ++k) s = step(t, s, optimal_action(t, s), rng).next_state;
  EXPECT_EQ(s, r.state_of({4, 2}));
  EXPECT_EQ(optimal_action(t, s), static_cast<int>(Move::kStay));
}

TEST(OptimalAction, Darkroom2FollowsBfsShortestPaths) {
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const Darkroom2Task r = sample_darkroom2_task(5, rng);
    const Task t = r;
    const auto dist = bfs_distances(5, r.goal2);
    for (int s = 0; s < 25; ++s) {
      int here = s;
      int steps = 0;
      Rng env(0);
      while (here != r.state_of(r.goal2) && steps < 25) {
        here = step(t, here, optimal_action(t, here), env).next_state;
        ++steps;
      }
      EXPECT_EQ(steps, dist[s]);
      EXPECT_EQ(shortest_path_length(r.cell_of(s), r.goal2), dist[s]);
    }
  }
}

TEST(OracleReward, MatchesClosedFormWhenGoal1NotCrossed) {
  // Rewards are paid on arrival, so the step that enters goal2 already pays:
  // d moves, then H - d + 1 paying steps counting the arrival.
  for (int d = 0; d <= 2; ++d) {
    const Darkroom2Task r = room({0, 0}, {2 + d, 2}, 100);
    EXPECT_DOUBLE_EQ(oracle_episode_reward(r), 2.0 * (100 - d + (d > 0 ? 1 : 0)));
  }
}

TEST(OracleReward, LowerBoundHoldsForSampledTasks) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const Darkroom2Task r = sample_darkroom2_task(5, rng, 100);
    EXPECT_GE(oracle_episode_reward(r), 2.0 * (100 - 2 * 5));
  }
}

TEST(Regret, AllOptimalIsZero) {
  const Task t = BanditTask{{0.2, 0.8}, 0.3, 10};
  const std::vector<int> acts(10, 1);
  EXPECT_DOUBLE_EQ(cumulative_regret(t, acts), 0.0);
}

TEST(Regret, TenPullsOfWorseArm) {
  const Task t = BanditTask{{0.2, 0.8}, 0.3, 10};
  const std::vector<int> acts(10, 0);
  EXPECT_NEAR(cumulative_regret(t, acts), 6.0, 1e-12);
}

TEST(Regret, NeverNegative) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Task t = sample_bandit_task(5, rng, 0.3, 50);
    std::vector<int> acts(50);
    for (int& a : acts) a = static_cast<int>(rng.index(5));
    EXPECT_GE(cumulative_regret(t, acts), 0.0);
  }
}

TEST(Regret, GreedyOnTrueMeansIsZeroForLinear) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const Task t = sample_linear_task(10, 2, rng);
    const std::vector<int> acts(20, optimal_action(t, 0));
    EXPECT_NEAR(cumulative_regret(t, acts), 0.0, 1e-12);
  }
}

TEST(Rng, SubstreamsDifferByEveryKey) {
  const auto base = substream_seed(1, 2, 3, StreamTag::kVictim);
  EXPECT_NE(base, substream_seed(2, 2, 3, StreamTag::kVictim));
  EXPECT_NE(base, substream_seed(1, 3, 3, StreamTag::kVictim));
  EXPECT_NE(base, substream_seed(1, 2, 4, StreamTag::kVictim));
  EXPECT_NE(base, substream_seed(1, 2, 3, StreamTag::kAttack));
  EXPECT_EQ(base, substream_seed(1, 2, 3, StreamTag::kVictim));
}

TEST(Rng, Mix64MatchesSplitmixFinalizer) {
  // Reference splitmix64 output for state 0 after one increment.
  EXPECT_EQ(mix64(0), 0xE220A8397B1DCDAFull);
}
