#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ricl/envs.hpp"
#include "ricl/victims.hpp"

namespace ricl {

/// `key = value` lines, `#` starts a comment. Throws std::runtime_error with
/// the line number on malformed input or a repeated key.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

struct ExperimentConfig {
  EnvKind env = EnvKind::kBandit;
  std::uint64_t seed = 1;

  int num_actions = 5;
  int dim = 2;
  int grid_side = 5;
  int horizon = 500;
  double noise_std = 0.3;

  double epsilon = 0.4;
  double budget = 3.0;
  double sigma_budget = 1.0;
  double lambda = 10.0;
  bool score_mean_over_steps = true;

  int num_tasks = 200;
  int num_rounds = 20;
  int iterations_per_round = 20;
  /// Rounds for NPG / Q-learning targets and their warm-up episode count.
  int multi_episode_rounds = 5;
  int warmup_episodes = 100;
  int replications = 10;

  double victim_lr = 1e-4;
  double attacker_lr = 0.03;
  double attacker_init_std = 0.4;
  bool adaptive_attacker = false;
  double adaptive_lr = 3e-5;

  int pretrain_samples = 100000;
  int pretrain_epochs = 400;
  double pretrain_lr = 1e-3;
  int pretrain_batch = 16;
  std::string behavior_policy = "uniform";

  // Transformer shape.
  int num_layers = 4;
  int num_heads = 4;
  int embed_dim = 32;
  bool learned_positions = true;

  // Classical victim hyperparameters.
  double ucb_scale = 0.45;
  double crucb_sigma0 = 0.08;
  double rts_tuned_bound = 0.5;
  double rts_known_bound = 120.0;
  double linucb_width = 0.3;

  // Design-decision switches, printed with the config.
  std::string query_distribution = "visited-cells";
  bool reset_classical_per_round = true;
  std::string cross_seed_pairing = "next-replication";

  /// Rows and columns of the evaluation matrix.
  std::vector<std::string> algorithms;
  std::vector<std::string> targets;
  std::vector<double> budgets;

  int checkpoint_interval = 0;
  std::string pretrained_checkpoint;
  bool train_inline = true;

  /// Full-scale defaults for one environment family.
  static ExperimentConfig defaults(EnvKind env);
  /// Reduced sizes that keep one CPU busy for minutes, not days.
  void apply_desk_scale();

  void set(const std::string& key, const std::string& value);
  void apply(const std::string& text);
  /// The file's env picks the defaults, desk scale (if asked) refines them,
  /// then every key in the text overrides.
  static ExperimentConfig resolve(const std::string& text, bool desk_scale);
  static ExperimentConfig load(const std::string& path, bool desk_scale);
  /// Every key, one per line, in a fixed order. resolve(dump()) reproduces it.
  std::string dump() const;
  void validate() const;

  TaskDistribution distribution() const;
  VictimSettings victim_settings() const;
};

std::vector<std::string> split_list(const std::string& text);

}  // namespace ricl
