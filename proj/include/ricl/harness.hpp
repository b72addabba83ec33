#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ricl/config.hpp"
#include "ricl/dpt.hpp"

namespace ricl {

using Logger = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------
// Records

struct MetricRecord {
  std::string env;
  std::string algorithm;
  std::string attacker_target;
  double epsilon = 0.0;
  int replication = 0;
  std::optional<int> round;
  std::string metric;
  double value = 0.0;
  double poisoned_fraction = 0.0;
};

inline constexpr const char* kRecordsHeader =
    "env,algorithm,attacker_target,epsilon,replication,round,metric,value,poisoned_fraction";

/// Shortest round-trip decimal form; identical doubles give identical text.
std::string format_number(double v);
std::string format_records_csv(const std::vector<MetricRecord>& records);
std::vector<MetricRecord> parse_records_csv(const std::string& text);

/// Half width of the epsilon +- 3 binomial standard deviations band for a
/// poisoned fraction measured over `steps` coin flips.
double poisoned_fraction_tolerance(double epsilon, long steps);

// ---------------------------------------------------------------------------
// Summaries

struct SummaryCell {
  double mean = 0.0;
  double half_width = 0.0;  // 2 * SEM
  int n = 0;
  bool singleton = false;
};

SummaryCell summarize_values(const std::vector<double>& values);

struct SummaryRow {
  std::string env;
  std::string algorithm;
  std::string attacker_target;
  double epsilon = 0.0;
  std::optional<int> round;
  std::string metric;
  SummaryCell cell;
};

/// One row per (env, algorithm, target, epsilon, round, metric), sorted by
/// that key, aggregating over replications.
std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records);
std::string format_summary_csv(const std::vector<SummaryRow>& rows);

// ---------------------------------------------------------------------------
// Pipeline

/// Seeds of one replication, derived from the experiment seed.
struct ReplicationSeeds {
  std::uint64_t base = 0;
  std::uint64_t tasks = 0;
  std::uint64_t adversarial = 0;
  std::uint64_t evaluation = 0;
  std::uint64_t uniform_attack = 0;

  std::uint64_t target(VictimId id) const;

  static ReplicationSeeds derive(std::uint64_t experiment_seed, int replication);
};

TransformerConfig victim_model_config(const ExperimentConfig& cfg);
RoundConfig round_config(const ExperimentConfig& cfg);

/// Generates the dataset and pretrains a fresh model.
Transformer pretrain_model(const ExperimentConfig& cfg, PretrainReport* report = nullptr, const Logger& log = {});

/// Fresh attackers of the configured kind for `num_tasks` tasks.
AttackerSet make_attackers(const ExperimentConfig& cfg, const TaskDistribution& dist, std::uint64_t seed);

struct AtDptRun {
  Transformer model;
  AttackerSet attackers;
  std::vector<RoundMetrics> curve;
};

/// Adversarial training from the pretrained model on one replication's tasks.
/// `on_round` (optional) sees the state after every round.
AtDptRun train_at_dpt(const ExperimentConfig& cfg, const Transformer& pretrained, const std::vector<Task>& tasks,
                      std::uint64_t seed,
                      const std::function<void(int, const AdversarialState&)>& on_round = {});

struct TargetRun {
  AttackerSet attackers;
  std::vector<RoundMetrics> curve;
};

/// Attackers trained against a non-AT-DPT target. DPT-frozen needs `pretrained`.
TargetRun train_target_attackers(const ExperimentConfig& cfg, VictimId target, const std::vector<Task>& tasks,
                                 const Transformer* pretrained, std::uint64_t seed);

/// Scores `victim` on every task with the given attackers (null = clean).
struct CellResult {
  double value = 0.0;
  double poisoned_fraction = 0.0;
  long steps = 0;
};
CellResult evaluate_cell(const ExperimentConfig& cfg, VictimId victim, const std::vector<Task>& tasks,
                         AttackerSet* attackers, const Transformer* model, std::uint64_t eval_seed);

/// Everything trained for one replication.
struct ReplicationArtifacts {
  std::vector<Task> tasks;
  std::optional<AtDptRun> at_dpt;
  std::map<std::string, TargetRun> targets;
};

/// Where trained artifacts are cached between CLI invocations. Empty
/// directory = keep everything in memory.
struct ArtifactStore {
  std::string directory;
  bool train_inline = true;

  std::string pretrained_path() const;
  std::string at_dpt_path(int replication) const;
  std::string attackers_path(int replication, const std::string& target) const;
};

ReplicationArtifacts prepare_replication(const ExperimentConfig& cfg, const Transformer* pretrained, int replication,
                                         const ArtifactStore& store, const Logger& log = {});

struct EvaluationOutput {
  std::vector<MetricRecord> records;  // test-phase cells, round unset
  std::vector<MetricRecord> curves;   // per-round training metrics
};

/// Rows = cfg.algorithms; columns = cfg.targets plus "uniform" and "clean".
/// AT-DPT of replication i faces the AT-DPT attackers (and tasks) of
/// replication (i + 1) mod R.
EvaluationOutput run_evaluation_matrix(const ExperimentConfig& cfg, const Transformer* pretrained,
                                       const ArtifactStore& store = {}, const Logger& log = {});

struct BudgetResult {
  double budget = 0.0;
  EvaluationOutput output;
};
std::vector<BudgetResult> budget_sweep(const ExperimentConfig& cfg, const std::vector<double>& budgets,
                                       const Transformer* pretrained, const Logger& log = {});

// ---------------------------------------------------------------------------
// Attacker persistence

void save_attackers(const std::string& path, const AttackerSet& attackers);
AttackerSet load_attackers(const std::string& path, const ExperimentConfig& cfg, const TaskDistribution& dist);

/// Loads a checkpoint or throws "missing checkpoint: <path>".
Transformer load_required_checkpoint(const std::string& path);

}  // namespace ricl
