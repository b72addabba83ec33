#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ricl/attackers.hpp"
#include "ricl/envs.hpp"
#include "ricl/transformer.hpp"
#include "ricl/victims.hpp"

namespace ricl {

// ---------------------------------------------------------------------------
// Context buffer

struct CleanTransition {
  int state = 0;
  int action = 0;
  double clean_reward = 0.0;
  int next_state = 0;
};

/// Ordered transitions with a victim view (observed rewards only) and an
/// attacker view (clean rewards only). Oldest entries fall out past capacity.
class ContextBuffer {
 public:
  explicit ContextBuffer(int capacity) : capacity_(capacity) {}
  void push(const Transition& t);
  static ContextBuffer from_trace(const EpisodeTrace& trace, int capacity);

  int capacity() const { return capacity_; }
  std::size_t size() const { return victim_.size(); }
  const std::vector<VictimTransition>& victim_view() const { return victim_; }
  const std::vector<CleanTransition>& attacker_view() const { return attacker_; }

 private:
  int capacity_;
  std::vector<VictimTransition> victim_;
  std::vector<CleanTransition> attacker_;
};

// ---------------------------------------------------------------------------
// Models

/// Transformer config for a task family: input width from the token layout,
/// one logit per action, capacity H.
TransformerConfig dpt_config(const TaskDistribution& dist);

/// In-context agent: the query token holds the start state, every observed
/// transition is appended, and the action is drawn from the softmax at the
/// last position (argmax when greedy).
class DptAgent : public Agent {
 public:
  DptAgent(const Transformer& model, TokenLayout layout, bool greedy = false);
  void begin_episode(int start_state) override;
  int act(int state, int step, Rng& rng) override;
  void observe(const VictimTransition& t) override;
  const Vec& logits() const { return logits_; }

 private:
  const Transformer* model_;
  TokenLayout layout_;
  IncrementalDecoder decoder_;
  bool greedy_;
  Vec logits_;
};

// ---------------------------------------------------------------------------
// Pretraining

enum class BehaviorPolicy { kUniform, kDirichlet };

std::string_view to_string(BehaviorPolicy p);
BehaviorPolicy parse_behavior_policy(std::string_view text);

struct PretrainSample {
  std::vector<VictimTransition> context;
  int query_state = 0;
  int optimal_action = 0;
  /// Label for every position: the query, then the state reached after each
  /// context entry.
  std::vector<int> targets;
};

/// Oracle labels for a context: a*(query) then a*(next_state) per entry.
std::vector<int> prefix_targets(const Task& task, const std::vector<VictimTransition>& context, int query_state);

std::vector<PretrainSample> generate_pretrain_dataset(const TaskDistribution& dist, BehaviorPolicy policy, int count,
                                                      std::uint64_t seed);

struct PretrainConfig {
  int epochs = 40;
  double learning_rate = 1e-3;
  int batch_size = 16;
};

struct PretrainReport {
  std::vector<double> epoch_loss;
};

/// Minibatch Adam on the prefix NLL. Throws std::runtime_error on a
/// non-finite loss.
PretrainReport pretrain(Transformer& model, const TokenLayout& layout, const std::vector<PretrainSample>& dataset,
                        const PretrainConfig& cfg, std::uint64_t seed);

/// One supervised Adam step per call over all sequences; returns the mean loss.
double supervised_step(Transformer& model, const std::vector<Mat>& sequences, const std::vector<std::vector<int>>& targets,
                       double learning_rate, ForwardCache& cache, int chunk = 16);

// ---------------------------------------------------------------------------
// Deployment

struct Deployment {
  EpisodeTrace trace;
  ContextBuffer context;
};

/// One in-context episode starting from an empty context.
Deployment deploy_in_context(const Transformer& model, const Task& task, Attacker* attacker, double epsilon,
                             RolloutStreams& streams, bool greedy = false);

/// Clean metric of a scored episode: cumulative regret for bandit families,
/// clean episode reward for Darkroom2.
double episode_metric(const Task& task, const EpisodeTrace& trace);
std::string_view metric_name(EnvKind kind);

// ---------------------------------------------------------------------------
// Attacker sets

enum class AttackerKind { kDirect, kAdaptive };

/// Per-task attackers (direct) or one shared transformer (adaptive).
class AttackerSet {
 public:
  AttackerSet() = default;
  static AttackerSet direct(const TaskDistribution& dist, int num_tasks, double init_std);
  static AttackerSet adaptive(const TaskDistribution& dist, int num_tasks, TransformerConfig cfg, std::uint64_t seed);
  static AttackerSet adaptive(const TaskDistribution& dist, int num_tasks, Transformer model);
  /// Frozen clipped uniform-random shifts, one per task.
  static AttackerSet uniform_random(const TaskDistribution& dist, int num_tasks, double budget, std::uint64_t seed);

  int size() const { return num_tasks_; }
  AttackerKind kind() const { return kind_; }
  bool trainable() const { return trainable_; }
  Attacker* for_task(int task);

  /// Advances every task's baseline with its trace, then runs the REINFORCE
  /// update. Traces are indexed by task.
  void update(const std::vector<EpisodeTrace>& traces, const AttackConfig& cfg, double learning_rate, int iterations);

  /// Mean over tasks of the mean-shift norm (direct attackers only).
  double mean_shift_norm() const;

  std::vector<BanditAttacker>& gaussian() { return gaussian_; }
  std::vector<MdpAttacker>& categorical() { return categorical_; }
  AdaptiveAttacker* shared() { return adaptive_.get(); }
  const AdaptiveAttacker* shared() const { return adaptive_.get(); }
  const std::vector<BanditAttacker>& gaussian() const { return gaussian_; }
  const std::vector<MdpAttacker>& categorical() const { return categorical_; }

  AttackerSet(const AttackerSet& other);
  AttackerSet& operator=(const AttackerSet& other);
  AttackerSet(AttackerSet&&) = default;
  AttackerSet& operator=(AttackerSet&&) = default;

 private:
  AttackerKind kind_ = AttackerKind::kDirect;
  int num_tasks_ = 0;
  bool trainable_ = true;
  std::vector<BanditAttacker> gaussian_;
  std::vector<MdpAttacker> categorical_;
  std::unique_ptr<AdaptiveAttacker> adaptive_;
  std::vector<ReinforceBaseline> baselines_;
};

// ---------------------------------------------------------------------------
// Adversarial training

struct RoundConfig {
  int num_tasks = 32;
  int num_rounds = 20;
  int iterations_per_round = 20;
  AttackConfig attack;
  double victim_lr = 1e-4;
  double attacker_lr = 0.03;
  bool frozen_victim = false;
  int chunk = 16;
};

struct RoundMetrics {
  int round = 0;
  double mean_metric = 0.0;
  double poisoned_fraction = 0.0;
  double attacker_norm = 0.0;
  bool aborted = false;
};

struct AdversarialState {
  Transformer model;
  TokenLayout layout;
  std::vector<Task> tasks;
  AttackerSet attackers;
  std::uint64_t seed = 0;
};

/// Rollouts on every task, attacker updates on the clean views, then
/// iterations_per_round supervised steps on the poisoned views with oracle
/// labels. Restores the round-start state if any update is non-finite.
RoundMetrics adversarial_round(AdversarialState& state, const RoundConfig& cfg, int round_index);

struct AdversarialResult {
  std::vector<RoundMetrics> curve;
};

AdversarialResult run_adversarial_training(AdversarialState& state, const RoundConfig& cfg,
                                           const std::function<void(int, const AdversarialState&)>& on_round = {});

/// Samples the M task set of one replication.
std::vector<Task> sample_tasks(const TaskDistribution& dist, int count, std::uint64_t seed);

struct TargetTrainingConfig {
  RoundConfig round;
  VictimSettings victim;
  /// Learning episodes before the scored one for NPG / Q-learning.
  int warmup_episodes = 100;
};

/// Trains `attackers` (one per task) against a fixed victim: a frozen
/// transformer or a classical learner rebuilt fresh every round.
std::vector<RoundMetrics> train_attacker_for_target(VictimId target, const std::vector<Task>& tasks,
                                                    AttackerSet& attackers, const TargetTrainingConfig& cfg,
                                                    const Transformer* model, std::uint64_t seed);

/// One scored evaluation episode of `victim` on `task` with an optional
/// frozen attacker. Transformer victims need `model`.
EpisodeTrace evaluate_victim(VictimId victim, const Task& task, Attacker* attacker, double epsilon,
                             RolloutStreams& streams, const VictimSettings& settings, const Transformer* model,
                             int warmup_episodes);

}  // namespace ricl
