#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ricl/envs.hpp"
#include "ricl/rng.hpp"

namespace ricl {

/// The projection of a Transition a learner is allowed to see. It has no
/// clean reward and no poisoned flag.
struct VictimTransition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
};

/// Online decision maker driven by a rollout loop.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin_episode(int /*start_state*/) {}
  /// `step` is the 0-based index within the episode.
  virtual int act(int state, int step, Rng& rng) = 0;
  virtual void observe(const VictimTransition& transition) = 0;
  virtual void end_episode() {}
};

// ---------------------------------------------------------------------------
// Robust statistics

struct TrimmedMean {
  double value = 0.0;
  bool degenerate = false;  // nothing left after trimming (or empty input)
};

/// Drops ceil(alpha*n) values from each end of the sorted sample and averages
/// the rest. Returns 0 flagged degenerate when nothing is left.
TrimmedMean trimmed_mean(std::span<const double> values, double alpha);

struct ArmStatistics {
  std::vector<int> counts;
  std::vector<std::vector<double>> rewards;
  std::vector<double> sums;

  explicit ArmStatistics(int num_arms = 0)
      : counts(num_arms, 0), rewards(num_arms), sums(num_arms, 0.0) {}
  void record(int arm, double reward);
  int total() const;
  int num_arms() const { return static_cast<int>(counts.size()); }
  double mean(int arm) const { return counts[arm] > 0 ? sums[arm] / counts[arm] : 0.0; }
};

enum class CrUcbVariant { kOriginal, kLowSigma0, kModified };

struct CrUcbConfig {
  double alpha = 0.4;
  double sigma0 = 0.08;
  CrUcbVariant variant = CrUcbVariant::kModified;
};

/// Bonus term only; +infinity when the arm's effective sample count is zero.
/// `step` is h >= 1 (real-valued so the formula can be probed between steps).
double crucb_bonus(int pulls, double step, const CrUcbConfig& cfg);
/// Trimmed-mean estimate plus bonus for every arm. `step` is 1-based.
std::vector<double> crucb_scores(const ArmStatistics& stats, int step, const CrUcbConfig& cfg);

enum class RtsRegime { kKnown, kUnknown, kTuned };

struct RtsConfig {
  double corruption_bound = 0.5;
  RtsRegime regime = RtsRegime::kTuned;
};

/// Corruption level hyperparameter for RTS. The known regime sums the
/// magnitudes of a supplied corruption trace and throws without one.
double rts_bound(RtsRegime regime, int horizon, int num_arms,
                 std::optional<std::span<const double>> observed_corruptions = std::nullopt);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Bandit algorithms

/// Gaussian Thompson sampling with a conjugate normal prior.
class ThompsonSampling : public Agent {
 public:
  struct Params {
    double prior_mean = 0.5;
    double prior_var = 1.0;
    double obs_var = 0.09;
  };
  ThompsonSampling(int num_arms, Params params);
  explicit ThompsonSampling(int num_arms) : ThompsonSampling(num_arms, Params{}) {}

  int act(int state, int step, Rng& rng) override;
  void observe(const VictimTransition& t) override;
  const ArmStatistics& stats() const { return stats_; }

 protected:
  /// Extra optimism added to the posterior mean of `arm`.
  virtual double mean_bonus(int /*arm*/) const { return 0.0; }

  ArmStatistics stats_;
  Params params_;
};

/// Thompson sampling whose posterior mean is inflated by C/N_a.
class RobustThompsonSampling : public ThompsonSampling {
 public:
  RobustThompsonSampling(int num_arms, double corruption_bound, Params params = {});
  double corruption_bound() const { return corruption_bound_; }

 protected:
  double mean_bonus(int arm) const override;

 private:
  double corruption_bound_;
};

class Ucb1 : public Agent {
 public:
  explicit Ucb1(int num_arms, double scale = 1.0);
  int act(int state, int step, Rng& rng) override;
  void observe(const VictimTransition& t) override;
  const ArmStatistics& stats() const { return stats_; }

 private:
  ArmStatistics stats_;
  double scale_;
};

class CrUcb : public Agent {
 public:
  CrUcb(int num_arms, CrUcbConfig cfg);
  int act(int state, int step, Rng& rng) override;
  void observe(const VictimTransition& t) override;
  const ArmStatistics& stats() const { return stats_; }

 private:
  ArmStatistics stats_;
  CrUcbConfig cfg_;
};

// ---------------------------------------------------------------------------
// Linear bandits

class LinUcb : public Agent {
 public:
  /// `width` scales the confidence ellipsoid; `ridge` is the identity prior.
  LinUcb(FeatureMatrix features, double width, double ridge = 1.0);
  int act(int state, int step, Rng& rng) override;
  void observe(const VictimTransition& t) override;
  std::vector<double> indices() const;
  std::vector<double> estimate() const;

 private:
  FeatureMatrix features_;
  double width_;
  int dim_;
  std::vector<double> gram_;    // dim x dim, row-major
  std::vector<double> target_;  // sum of reward * features
  std::vector<int> counts_;
};

enum class CrLinUcbVariant { kV1, kV2, kV3 };

struct CrLinUcbConfig {
  double budget_bound = 1.0;  // C'
  CrLinUcbVariant variant = CrLinUcbVariant::kV2;
};

/// C' for each variant from the contamination setting: v1 = eps*B*H,
/// v2 = v1 / H, v3 = geometric mean of v1 and v2.
CrLinUcbConfig crlinucb_config(CrLinUcbVariant variant, double epsilon, double budget, int horizon);
double geometric_mean(double a, double b);

/// LinUCB whose confidence width is inflated by the corruption budget C'
/// (scaled by 1/sqrt(ridge)).
class CrLinUcb : public LinUcb {
 public:
  CrLinUcb(FeatureMatrix features, double width, CrLinUcbConfig cfg, double ridge = 1.0);
  const CrLinUcbConfig& config() const { return cfg_; }

 private:
  CrLinUcbConfig cfg_;
};

// ---------------------------------------------------------------------------
// Tabular RL

struct QLearningConfig {
  double learning_rate = 0.3;
  double discount = 0.9;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int decay_episodes = 60;
};

class QLearning : public Agent {
 public:
  QLearning(int num_states, int num_actions, QLearningConfig cfg);
  void begin_episode(int start_state) override;
  int act(int state, int step, Rng& rng) override;
  void observe(const VictimTransition& t) override;
  void end_episode() override;

  double exploration_rate() const;
  void set_greedy(bool greedy) { greedy_ = greedy; }
  const std::vector<double>& table() const { return q_; }
  std::vector<double>& table() { return q_; }
  double value(int state, int action) const { return q_[state * num_actions_ + action]; }
  int greedy_action(int state) const;

 private:
  int num_states_;
  int num_actions_;
  QLearningConfig cfg_;
  std::vector<double> q_;
  int episodes_ = 0;
  bool greedy_ = false;
};

struct NpgConfig {
  double step_size = 0.1;
  double discount = 0.9;
  double value_rate = 0.3;  // averaging rate of the Q estimates
};

/// Tabular softmax policy with the natural-gradient update
/// theta(s, .) += step_size * (Q(s, .) - V(s)) on visited states.
class NaturalPolicyGradient : public Agent {
 public:
  NaturalPolicyGradient(int num_states, int num_actions, NpgConfig cfg);
  void begin_episode(int start_state) override;
  int act(int state, int step, Rng& rng) override;
  void observe(const VictimTransition& t) override;
  void end_episode() override;

  std::vector<double> probabilities(int state) const;
  const std::vector<double>& logits() const { return theta_; }

 private:
  int num_states_;
  int num_actions_;
  NpgConfig cfg_;
  std::vector<double> theta_;
  std::vector<double> q_;
  std::vector<VictimTransition> episode_;
};

struct EpisodeSummary {
  std::vector<int> actions;
  double clean_return = 0.0;
};

/// One clean Q-learning episode: act, step, TD-update.
EpisodeSummary q_learning_episode(QLearning& agent, const Task& task, Rng& rng);
/// One clean NPG episode followed by the policy update.
EpisodeSummary npg_episode(NaturalPolicyGradient& agent, const Task& task, Rng& rng);

/// Greedy policy of value iteration on a deterministic tabular task (test oracle
/// for tabular learners; also used by diagnostics).
std::vector<int> value_iteration_policy(const Task& task, double discount, int iterations = 1000);

// ---------------------------------------------------------------------------
// Victim registry

enum class VictimId {
  kAtDpt,
  kDptFrozen,
  kTs,
  kRtsTuned,
  kRtsUnknown,
  kRtsKnown,
  kUcb,
  kCrUcbOriginal,
  kCrUcbLowSigma0,
  kCrUcbModified,
  kLinUcb,
  kCrLinUcbV1,
  kCrLinUcbV2,
  kCrLinUcbV3,
  kNpg,
  kQLearning,
};

std::string_view to_string(VictimId id);
/// Accepts canonical names and the short aliases RTS, crUCB, CRLinUCB, DPT.
VictimId parse_victim_id(std::string_view text);
bool is_transformer_victim(VictimId id);
/// NPG and Q-learning learn across many episodes before evaluation.
bool is_multi_episode_victim(VictimId id);
bool supports_env(VictimId id, EnvKind env);

/// Settings classical victims derive their hyperparameters from.
struct VictimSettings {
  double epsilon = 0.4;
  double budget = 3.0;
  double crucb_sigma0 = 0.08;
  double ucb_scale = 0.45;
  double linucb_width = 0.3;
  double rts_tuned_bound = 0.5;
  /// C for the RTS known regime; must be set before building that victim.
  std::optional<double> rts_known_bound;
  ThompsonSampling::Params ts;
  QLearningConfig q_learning;
  NpgConfig npg;
};

/// Builds a fresh classical learner for `task`. Throws for transformer ids.
std::unique_ptr<Agent> make_classical_victim(VictimId id, const Task& task, const VictimSettings& settings);

}  // namespace ricl
