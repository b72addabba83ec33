#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ricl/envs.hpp"
#include "ricl/rng.hpp"
#include "ricl/transformer.hpp"
#include "ricl/victims.hpp"

namespace ricl {

struct AttackConfig {
  double epsilon = 0.4;
  double budget = 3.0;
  double sigma_budget = 1.0;
  double lambda = 10.0;
  /// Average the score-function term over poisoned steps instead of summing
  /// it per episode. Without this the summed term's noise swamps the budget
  /// penalty under Adam and the shift norm drifts far past B.
  bool score_mean_over_steps = true;

  void validate() const;
};

struct Contamination {
  double observed = 0.0;
  bool poisoned = false;
};

/// Bernoulli(epsilon) coin: the attack reward replaces the clean one when it lands.
Contamination contaminate(double clean_reward, double attack_reward, double epsilon, Rng& coin);

/// max(0, x - bound)
double hinge(double x, double bound);
double l2_norm(const std::vector<double>& v);

// ---------------------------------------------------------------------------
// Episode traces

struct StepRecord {
  Transition transition;
  bool poisoned = false;
  double perturbation = 0.0;  // r_dagger - r_bar on poisoned steps
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;
  /// Actions and clean return of the scored episode (the last one for
  /// multi-episode victims).
  std::vector<int> actions;
  double clean_return = 0.0;
  /// When false every poisoned step is credited with the scored episode's
  /// return instead of its own reward-to-go.
  bool reward_to_go = true;

  double poisoned_fraction() const;
  int poisoned_steps() const;
};

/// Independent streams of one rollout. Keeping the coin and the attack draw
/// apart makes the poisoned-step pattern independent of the attack values.
struct RolloutStreams {
  Rng victim;
  Rng environment;
  Rng coin;
  Rng attack;

  static RolloutStreams derive(std::uint64_t seed, std::uint64_t task_index, std::uint64_t round_index);
};

// ---------------------------------------------------------------------------
// Attackers

class Attacker {
 public:
  virtual ~Attacker() = default;
  virtual void begin_episode() {}
  /// Every step, poisoned or not, is shown to the attacker with its clean reward.
  virtual void observe(int /*state*/, int /*action*/, double /*clean_reward*/) {}
  /// Perturbation added to the clean reward on a poisoned step.
  virtual double sample_perturbation(int state, int action, double clean_reward, Rng& rng) = 0;
};

/// Gaussian perturbation table indexed by (state, action); bandits have one
/// state. mean_shift is phi, log_std the diagonal log standard deviation.
class BanditAttacker : public Attacker {
 public:
  BanditAttacker(int num_states, int num_actions, double init_std);
  /// Frozen deterministic shift (zero std).
  static BanditAttacker fixed(int num_states, int num_actions, const std::vector<double>& shift);

  int num_components() const { return num_states_ * num_actions_; }
  int component(int state, int action) const { return state * num_actions_ + action; }
  std::vector<double> mean_shift() const { return params_.at("mean_shift").value; }
  std::vector<double> stds() const;
  void set_mean_shift(const std::vector<double>& shift);
  void set_log_std(const std::vector<double>& log_std);

  double sample_perturbation(int state, int action, double clean_reward, Rng& rng) override;
  double attack_reward(int state, int action, double clean_reward, Rng& rng) {
    return clean_reward + sample_perturbation(state, action, clean_reward, rng);
  }
  double log_density(int state, int action, double perturbation) const;

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

 private:
  int num_states_;
  int num_actions_;
  ModelParams params_;
};

/// Categorical attack over {-1, 0, +1} per (state, action), softmax logits.
class MdpAttacker : public Attacker {
 public:
  MdpAttacker(int num_states, int num_actions);

  int num_components() const { return num_states_ * num_actions_; }
  std::vector<double> probabilities(int state, int action) const;
  /// Expected perturbation per (state, action).
  std::vector<double> mean_shift() const;
  void set_logits(int state, int action, const std::vector<double>& logits);

  double sample_perturbation(int state, int action, double clean_reward, Rng& rng) override;
  double attack_reward(int state, int action, double clean_reward, Rng& rng) {
    return clean_reward + sample_perturbation(state, action, clean_reward, rng);
  }

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

 private:
  int num_states_;
  int num_actions_;
  ModelParams params_;
};

/// Token layout of the attacker's clean-reward context:
/// bandit [one-hot a | r], linear [psi(a) | r], darkroom2 [one-hot s | one-hot a | r].
struct AttackerTokenLayout {
  TokenLayout base;
  int width() const;
  Vec encode(int state, int action, double clean_reward) const;
};

inline constexpr double kAdaptiveStdFloor = 1e-3;

/// Transformer attacker with a Gaussian head (mean, raw log-std) over the
/// additive perturbation. Output at position h conditions on the attacker's
/// clean context up to and including step h.
class AdaptiveAttacker : public Attacker {
 public:
  AdaptiveAttacker(const AttackerTokenLayout& layout, TransformerConfig cfg, Rng& init_rng);
  AdaptiveAttacker(const AttackerTokenLayout& layout, Transformer model);
  AdaptiveAttacker(const AdaptiveAttacker& other);

  void begin_episode() override;
  void observe(int state, int action, double clean_reward) override;
  double sample_perturbation(int state, int action, double clean_reward, Rng& rng) override;

  /// Mean and std at the most recent position.
  double current_mean() const { return current_mean_; }
  double current_std() const { return current_std_; }
  int context_length() const { return static_cast<int>(context_.size()); }

  Transformer& model() { return model_; }
  const Transformer& model() const { return model_; }
  const AttackerTokenLayout& layout() const { return layout_; }
  /// Encodes the clean view of a trace as one sequence.
  Mat encode_trace(const EpisodeTrace& trace) const;

  static double std_from_raw(double raw) { return kAdaptiveStdFloor + std::exp(raw); }

 private:
  void rebuild();

  AttackerTokenLayout layout_;
  Transformer model_;
  std::unique_ptr<IncrementalDecoder> decoder_;
  std::vector<Vec> context_;
  double current_mean_ = 0.0;
  double current_std_ = 1.0;
};

/// Rescales `v` onto the sphere of `radius` when its norm exceeds it.
void project_to_ball(std::vector<double>& v, double radius);

/// Uniform draw on [-B, B] per component, rescaled onto the ball of radius B
/// when its norm exceeds B.
std::vector<double> uniform_random_attack(int num_components, double budget, Rng& rng);

// ---------------------------------------------------------------------------
// Objective and training

/// mean(-clean_return) - lambda * c_mu(|mean shift|) - lambda * c_sigma(|std|).
double attacker_objective(const std::vector<double>& clean_returns, const std::vector<double>& mean_shift,
                          const std::vector<double>& stds, const AttackConfig& cfg);
double attacker_objective(const std::vector<double>& clean_returns, const BanditAttacker& attacker,
                          const AttackConfig& cfg);
/// The categorical attacker is penalized on its mean shift only.
double attacker_objective(const std::vector<double>& clean_returns, const MdpAttacker& attacker,
                          const AttackConfig& cfg);

/// Exponential moving average of per-step reward-to-go (or of the scored
/// return when a trace has reward_to_go = false).
struct ReinforceBaseline {
  double decay = 0.9;
  bool initialized = false;
  std::vector<double> values;

  /// Advantages of every step of `trace` against the current baseline; the
  /// baseline is then moved towards this trace's returns.
  std::vector<double> advance(const EpisodeTrace& trace);
};

/// Attacker-side return of each step: sum of -clean reward after the step, or
/// -scored return when reward_to_go is false.
std::vector<double> attacker_returns(const EpisodeTrace& trace);

struct UpdateReport {
  bool applied = false;
  int poisoned_steps = 0;
};

/// `iterations` Adam ascent steps on the objective using fixed traces and
/// advantages. Score-function gradient for the return term, analytic gradient
/// for the penalties. No-op when no trace has a poisoned step.
UpdateReport reinforce_update(BanditAttacker& attacker, const std::vector<EpisodeTrace>& traces,
                              const std::vector<std::vector<double>>& advantages, const AttackConfig& cfg,
                              double learning_rate, int iterations = 1);
UpdateReport reinforce_update(MdpAttacker& attacker, const std::vector<EpisodeTrace>& traces,
                              const std::vector<std::vector<double>>& advantages, const AttackConfig& cfg,
                              double learning_rate, int iterations = 1);
UpdateReport reinforce_update(AdaptiveAttacker& attacker, const std::vector<EpisodeTrace>& traces,
                              const std::vector<std::vector<double>>& advantages, const AttackConfig& cfg,
                              double learning_rate, int iterations = 1);

/// Gradient of the penalty terms only (ascent direction) for the Gaussian table.
void penalty_gradient(const BanditAttacker& attacker, const AttackConfig& cfg, std::vector<double>& d_mean,
                      std::vector<double>& d_log_std);

// ---------------------------------------------------------------------------
// Rollouts

/// One H-step episode of `victim` on `task`, poisoned by `attacker` (may be
/// null). The victim only sees VictimTransition values.
EpisodeTrace run_episode(Agent& victim, const Task& task, Attacker* attacker, double epsilon,
                         RolloutStreams& streams);

/// `warmup` learning episodes followed by one scored episode, all poisoned.
EpisodeTrace run_multi_episode(Agent& victim, const Task& task, Attacker* attacker, double epsilon,
                               RolloutStreams& streams, int warmup);

}  // namespace ricl
