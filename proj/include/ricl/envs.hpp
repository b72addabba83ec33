#pragma once

#include <compare>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ricl/rng.hpp"

namespace ricl {

enum class EnvKind { kBandit, kLinear, kDarkroom2 };

std::string_view to_string(EnvKind kind);
EnvKind parse_env_kind(std::string_view text);

/// Bandit and linear-bandit tasks have a single state with this id.
inline constexpr int kDummyState = 0;

/// Darkroom2 moves. The enum order is also the tie-break order of the oracle.
enum class Move : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
inline constexpr int kNumMoves = 5;

struct Cell {
  int x = 0;  // column
  int y = 0;  // row
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct BanditTask {
  std::vector<double> means;
  double noise_std = 0.3;
  int horizon = 500;
};

/// Row a holds psi(a).
using FeatureMatrix = std::vector<std::vector<double>>;

struct LinearBanditTask {
  std::vector<double> omega;
  FeatureMatrix features;
  double noise_std = 0.3;
  int horizon = 200;

  int dim() const { return static_cast<int>(omega.size()); }
  /// <omega, psi(a)> for every action.
  std::vector<double> arm_means() const;
};

struct Darkroom2Task {
  int grid_side = 5;
  Cell goal1;
  Cell goal2;
  Cell start;
  int horizon = 200;

  int state_of(Cell c) const { return c.y * grid_side + c.x; }
  Cell cell_of(int state) const { return {state % grid_side, state / grid_side}; }
  Cell apply(Cell c, Move m) const;
  double reward_at(Cell c) const;
};

using Task = std::variant<BanditTask, LinearBanditTask, Darkroom2Task>;

/// One interaction record. Victims only ever see the projection without
/// clean_reward (see VictimTransition).
struct Transition {
  int state = 0;
  int action = 0;
  double observed_reward = 0.0;
  double clean_reward = 0.0;
  int next_state = 0;
  int step = 0;
};

struct StepResult {
  double reward = 0.0;
  int next_state = 0;
};

BanditTask sample_bandit_task(int num_arms, Rng& rng, double noise_std = 0.3, int horizon = 500);
FeatureMatrix sample_linear_features(int num_actions, int dim, Rng& rng);
/// Samples omega for a given shared feature matrix.
LinearBanditTask sample_linear_task(const FeatureMatrix& features, Rng& rng, double noise_std = 0.3,
                                    int horizon = 200);
/// Samples both features and omega (single-task convenience).
LinearBanditTask sample_linear_task(int num_actions, int dim, Rng& rng, double noise_std = 0.3,
                                    int horizon = 200);
Darkroom2Task sample_darkroom2_task(int grid_side, Rng& rng, int horizon = 200);

EnvKind kind_of(const Task& task);
int num_states(const Task& task);
int num_actions(const Task& task);
int horizon_of(const Task& task);
int start_state(const Task& task);

/// Throws std::invalid_argument on an invalid state or action id.
StepResult step(const Task& task, int state, int action, Rng& rng);
/// Noise-free reward of taking `action` in `state`.
double mean_reward(const Task& task, int state, int action);
int optimal_action(const Task& task, int state);

/// Sum over steps of (best mean - chosen mean). Bandit and linear tasks only.
double cumulative_regret(const Task& task, std::span<const int> actions);

/// Manhattan distance; Darkroom2 has no walls inside the grid.
int shortest_path_length(Cell from, Cell to);

/// Episode reward of following optimal_action from the start state.
double oracle_episode_reward(const Darkroom2Task& task);

/// Task sampler for one experiment. The linear-bandit feature matrix is drawn
/// once per distribution and shared by every task it produces.
struct TaskDistribution {
  EnvKind kind = EnvKind::kBandit;
  int num_actions = 5;
  int dim = 2;
  int grid_side = 5;
  int horizon = 500;
  double noise_std = 0.3;
  FeatureMatrix features;

  static TaskDistribution bandit(int num_arms, int horizon, double noise_std = 0.3);
  static TaskDistribution linear(int num_actions, int dim, int horizon, Rng& feature_rng,
                                 double noise_std = 0.3);
  static TaskDistribution darkroom2(int grid_side, int horizon);

  Task sample(Rng& rng) const;
  int action_count() const;
  int state_count() const;
};

}  // namespace ricl
