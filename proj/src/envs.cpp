#include "ricl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ricl {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void check_action(int action, int count) {
  if (action < 0 || action >= count) {
    throw std::invalid_argument("invalid action id " + std::to_string(action));
  }
}

void check_state(int state, int count) {
  if (state < 0 || state >= count) {
    throw std::invalid_argument("invalid state id " + std::to_string(state));
  }
}

}  // namespace

std::string_view to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::kBandit:
      return "bandit";
    case EnvKind::kLinear:
      return "linear";
    case EnvKind::kDarkroom2:
      return "darkroom2";
  }
  return "unknown";
}

EnvKind parse_env_kind(std::string_view text) {
  if (text == "bandit") return EnvKind::kBandit;
  if (text == "linear") return EnvKind::kLinear;
  if (text == "darkroom2") return EnvKind::kDarkroom2;
  throw std::invalid_argument("unknown environment kind '" + std::string(text) + "'");
}

std::vector<double> LinearBanditTask::arm_means() const {
  std::vector<double> out(features.size(), 0.0);
  for (std::size_t a = 0; a < features.size(); ++a) {
    for (std::size_t i = 0; i < omega.size(); ++i) out[a] += omega[i] * features[a][i];
  }
  return out;
}

Cell Darkroom2Task::apply(Cell c, Move m) const {
  switch (m) {
    case Move::kUp:
      c.y = std::max(0, c.y - 1);
      break;
    case Move::kDown:
      c.y = std::min(grid_side - 1, c.y + 1);
      break;
    case Move::kLeft:
      c.x = std::max(0, c.x - 1);
      break;
    case Move::kRight:
      c.x = std::min(grid_side - 1, c.x + 1);
      break;
    case Move::kStay:
      break;
  }
  return c;
}

double Darkroom2Task::reward_at(Cell c) const {
  if (c == goal2) return 2.0;
  if (c == goal1) return 1.0;
  return 0.0;
}

BanditTask sample_bandit_task(int num_arms, Rng& rng, double noise_std, int horizon) {
  if (num_arms < 2) throw std::invalid_argument("bandit task needs at least 2 arms");
  BanditTask task;
  task.means.resize(static_cast<std::size_t>(num_arms));
  for (double& m : task.means) m = rng.uniform();
  task.noise_std = noise_std;
  task.horizon = horizon;
  return task;
}

FeatureMatrix sample_linear_features(int num_actions, int dim, Rng& rng) {
  if (dim < 1 || num_actions < 2) throw std::invalid_argument("linear task needs dim>=1, actions>=2");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  FeatureMatrix features(static_cast<std::size_t>(num_actions), std::vector<double>(dim));
  for (auto& row : features) {
    for (double& v : row) v = scale * rng.normal();
  }
  return features;
}

LinearBanditTask sample_linear_task(const FeatureMatrix& features, Rng& rng, double noise_std,
                                    int horizon) {
  if (features.size() < 2 || features.front().empty()) {
    throw std::invalid_argument("linear task needs dim>=1, actions>=2");
  }
  const std::size_t dim = features.front().size();
  LinearBanditTask task;
  task.features = features;
  task.omega.resize(dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& w : task.omega) w = scale * rng.normal();
  task.noise_std = noise_std;
  task.horizon = horizon;
  return task;
}

LinearBanditTask sample_linear_task(int num_actions, int dim, Rng& rng, double noise_std, int horizon) {
  const FeatureMatrix features = sample_linear_features(num_actions, dim, rng);
  return sample_linear_task(features, rng, noise_std, horizon);
}

Darkroom2Task sample_darkroom2_task(int grid_side, Rng& rng, int horizon) {
  if (grid_side < 2) throw std::invalid_argument("darkroom2 grid side must be >= 2");
  Darkroom2Task task;
  task.grid_side = grid_side;
  task.horizon = horizon;
  const std::size_t cells = static_cast<std::size_t>(grid_side * grid_side);
  const int g1 = static_cast<int>(rng.index(cells));
  int g2 = static_cast<int>(rng.index(cells - 1));
  if (g2 >= g1) ++g2;
  task.goal1 = task.cell_of(g1);
  task.goal2 = task.cell_of(g2);
  task.start = {grid_side / 2, grid_side / 2};
  return task;
}

EnvKind kind_of(const Task& task) {
  return std::visit(Overloaded{[](const BanditTask&) { return EnvKind::kBandit; },
                               [](const LinearBanditTask&) { return EnvKind::kLinear; },
                               [](const Darkroom2Task&) { return EnvKind::kDarkroom2; }},
                    task);
}

int num_states(const Task& task) {
  if (const auto* room = std::get_if<Darkroom2Task>(&task)) return room->grid_side * room->grid_side;
  return 1;
}

int num_actions(const Task& task) {
  return std::visit(Overloaded{[](const BanditTask& t) { return static_cast<int>(t.means.size()); },
                               [](const LinearBanditTask& t) { return static_cast<int>(t.features.size()); },
                               [](const Darkroom2Task&) { return kNumMoves; }},
                    task);
}

int horizon_of(const Task& task) {
  return std::visit([](const auto& t) { return t.horizon; }, task);
}

int start_state(const Task& task) {
  if (const auto* room = std::get_if<Darkroom2Task>(&task)) return room->state_of(room->start);
  return kDummyState;
}

StepResult step(const Task& task, int state, int action, Rng& rng) {
  check_state(state, num_states(task));
  check_action(action, num_actions(task));
  return std::visit(
      Overloaded{[&](const BanditTask& t) {
                   return StepResult{t.means[action] + t.noise_std * rng.normal(), kDummyState};
                 },
                 [&](const LinearBanditTask& t) {
                   double mean = 0.0;
                   for (std::size_t i = 0; i < t.omega.size(); ++i) mean += t.omega[i] * t.features[action][i];
                   return StepResult{mean + t.noise_std * rng.normal(), kDummyState};
                 },
                 [&](const Darkroom2Task& t) {
                   const Cell next = t.apply(t.cell_of(state), static_cast<Move>(action));
                   return StepResult{t.reward_at(next), t.state_of(next)};
                 }},
      task);
}

double mean_reward(const Task& task, int state, int action) {
  check_state(state, num_states(task));
  check_action(action, num_actions(task));
  return std::visit(Overloaded{[&](const BanditTask& t) { return t.means[action]; },
                               [&](const LinearBanditTask& t) { return t.arm_means()[action]; },
                               [&](const Darkroom2Task& t) {
                                 return t.reward_at(t.apply(t.cell_of(state), static_cast<Move>(action)));
                               }},
                    task);
}

int shortest_path_length(Cell from, Cell to) { return std::abs(from.x - to.x) + std::abs(from.y - to.y); }

int optimal_action(const Task& task, int state) {
  check_state(state, num_states(task));
  return std::visit(
      Overloaded{[](const BanditTask& t) { return static_cast<int>(argmax_lowest(t.means)); },
                 [](const LinearBanditTask& t) {
                   const auto means = t.arm_means();
                   return static_cast<int>(argmax_lowest(means));
                 },
                 [&](const Darkroom2Task& t) {
                   const Cell here = t.cell_of(state);
                   const int dist = shortest_path_length(here, t.goal2);
                   if (dist == 0) return static_cast<int>(Move::kStay);
                   for (int m = 0; m < kNumMoves; ++m) {
                     if (shortest_path_length(t.apply(here, static_cast<Move>(m)), t.goal2) < dist) return m;
                   }
                   return static_cast<int>(Move::kStay);
                 }},
      task);
}

double cumulative_regret(const Task& task, std::span<const int> actions) {
  std::vector<double> means;
  if (const auto* b = std::get_if<BanditTask>(&task)) {
    means = b->means;
  } else if (const auto* l = std::get_if<LinearBanditTask>(&task)) {
    means = l->arm_means();
  } else {
    throw std::invalid_argument("cumulative_regret is defined for bandit tasks only");
  }
  const double best = *std::max_element(means.begin(), means.end());
  double regret = 0.0;
  for (int a : actions) {
    check_action(a, static_cast<int>(means.size()));
    regret += best - means[static_cast<std::size_t>(a)];
  }
  return regret;
}

double oracle_episode_reward(const Darkroom2Task& room) {
  const Task task = room;
  int state = room.state_of(room.start);
  double total = 0.0;
  for (int h = 0; h < room.horizon; ++h) {
    const Cell next = room.apply(room.cell_of(state), static_cast<Move>(optimal_action(task, state)));
    total += room.reward_at(next);
    state = room.state_of(next);
  }
  return total;
}

TaskDistribution TaskDistribution::bandit(int num_arms, int horizon, double noise_std) {
  TaskDistribution d;
  d.kind = EnvKind::kBandit;
  d.num_actions = num_arms;
  d.horizon = horizon;
  d.noise_std = noise_std;
  return d;
}

TaskDistribution TaskDistribution::linear(int num_actions, int dim, int horizon, Rng& feature_rng,
                                          double noise_std) {
  TaskDistribution d;
  d.kind = EnvKind::kLinear;
  d.num_actions = num_actions;
  d.dim = dim;
  d.horizon = horizon;
  d.noise_std = noise_std;
  d.features = sample_linear_features(num_actions, dim, feature_rng);
  return d;
}

TaskDistribution TaskDistribution::darkroom2(int grid_side, int horizon) {
  TaskDistribution d;
  d.kind = EnvKind::kDarkroom2;
  d.num_actions = kNumMoves;
  d.grid_side = grid_side;
  d.horizon = horizon;
  return d;
}

Task TaskDistribution::sample(Rng& rng) const {
  switch (kind) {
    case EnvKind::kBandit:
      return sample_bandit_task(num_actions, rng, noise_std, horizon);
    case EnvKind::kLinear:
      return sample_linear_task(features, rng, noise_std, horizon);
    case EnvKind::kDarkroom2:
      return sample_darkroom2_task(grid_side, rng, horizon);
  }
  throw std::logic_error("unreachable");
}

int TaskDistribution::action_count() const { return kind == EnvKind::kDarkroom2 ? kNumMoves : num_actions; }

int TaskDistribution::state_count() const { return kind == EnvKind::kDarkroom2 ? grid_side * grid_side : 1; }

}  // namespace ricl
