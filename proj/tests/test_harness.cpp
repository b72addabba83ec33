#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "ricl/checkpoint.hpp"
#include "ricl/harness.hpp"

namespace fs = std::filesystem;

namespace ricl {
namespace {

TEST(Config, DumpRoundTrips) {
  ExperimentConfig c = ExperimentConfig::defaults(EnvKind::kDarkroom2);
  c.apply_desk_scale();
  c.seed = 99;
  c.epsilon = 0.2;
  c.algorithms = {"AT-DPT", "NPG"};
  const std::string text = c.dump();
  const ExperimentConfig back = ExperimentConfig::resolve(text, false);
  EXPECT_EQ(back.dump(), text);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.horizon, 100);
  EXPECT_EQ(back.budget, 10.0);
}

TEST(Config, DumpListsDesignDecisions) {
  const std::string text = ExperimentConfig::defaults(EnvKind::kBandit).dump();
  for (const char* key : {"query_distribution", "reset_classical_per_round", "cross_seed_pairing",
                          "learned_positions", "behavior_policy", "score_mean_over_steps", "crucb_sigma0"}) {
    EXPECT_NE(text.find(std::string(key) + " = "), std::string::npos) << key;
  }
}

TEST(Config, DeskScaleThenFileOverrides) {
  const auto c = ExperimentConfig::resolve("env = bandit\nnum_tasks = 7\n", true);
  EXPECT_EQ(c.num_tasks, 7);
  EXPECT_EQ(c.horizon, 200);
  EXPECT_EQ(c.replications, 5);
  EXPECT_EQ(c.num_rounds, 20);
  EXPECT_EQ(c.pretrain_epochs, 40);
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(ExperimentConfig::resolve("horizon 10\n", false), std::runtime_error);
  EXPECT_THROW(ExperimentConfig::resolve("horizon = 10\nhorizon = 11\n", false), std::runtime_error);
  EXPECT_THROW(ExperimentConfig::resolve("no_such_key = 1\n", false), std::runtime_error);
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/x.cfg", false), std::runtime_error);
  auto c = ExperimentConfig::defaults(EnvKind::kBandit);
  c.replications = 0;
  EXPECT_THROW(c.validate(), std::exception);
  c = ExperimentConfig::defaults(EnvKind::kBandit);
  c.algorithms = {"TS", "Banana"};
  EXPECT_THROW(c.validate(), std::exception);
}

TEST(Config, ShippedConfigsResolve) {
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(RICL_CONFIG_DIR)) {
    for (bool desk : {false, true}) {
      const auto c = ExperimentConfig::load(entry.path().string(), desk);
      EXPECT_NO_THROW(c.validate()) << entry.path();
    }
    ++seen;
  }
  EXPECT_GE(seen, 3);
}

TEST(Config, CommentsAndWhitespace) {
  const auto kv = parse_key_values("# header\n  a = 1 # trailing\n\nb=two\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"a", "1"}));
  EXPECT_EQ(kv[1], (std::pair<std::string, std::string>{"b", "two"}));
}

TEST(Summary, ConstantValues) {
  const auto c = summarize_values({1, 1, 1, 1});
  EXPECT_EQ(c.mean, 1.0);
  EXPECT_EQ(c.half_width, 0.0);
  EXPECT_EQ(c.n, 4);
}

TEST(Summary, TwoValuesHandComputation) {
  // sample std sqrt(2), SEM sqrt(2)/sqrt(2) = 1
  const auto c = summarize_values({0, 2});
  EXPECT_DOUBLE_EQ(c.mean, 1.0);
  EXPECT_DOUBLE_EQ(c.half_width, 2.0);
  EXPECT_FALSE(c.singleton);
}

TEST(Summary, SingletonIsFlagged) {
  const auto c = summarize_values({3.5});
  EXPECT_EQ(c.mean, 3.5);
  EXPECT_EQ(c.half_width, 0.0);
  EXPECT_TRUE(c.singleton);
}

std::vector<MetricRecord> sample_records() {
  std::vector<MetricRecord> r;
  for (int rep = 0; rep < 4; ++rep) {
    for (const char* alg : {"TS", "UCB"}) {
      r.push_back({"bandit", alg, "TS", 0.4, rep, std::nullopt, "cumulative_regret", 10.0 * rep + (alg[0] == 'U'), 0.4});
      r.push_back({"bandit", alg, "clean", 0.0, rep, std::nullopt, "cumulative_regret", 1.0 + rep, 0.0});
    }
  }
  return r;
}

TEST(Summary, PermutationInvariant) {
  auto records = sample_records();
  const std::string a = format_summary_csv(summarize(records));
  std::mt19937 g(5);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(records.begin(), records.end(), g);
    EXPECT_EQ(format_summary_csv(summarize(records)), a);
  }
}

TEST(Summary, RowsMatchRecomputation) {
  const auto rows = summarize(sample_records());
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& row : rows) {
    std::vector<double> v;
    for (const auto& r : sample_records())
      if (r.algorithm == row.algorithm && r.attacker_target == row.attacker_target) v.push_back(r.value);
    const auto c = summarize_values(v);
    EXPECT_EQ(row.cell.mean, c.mean);
    EXPECT_EQ(row.cell.half_width, c.half_width);
    EXPECT_EQ(row.cell.n, 4);
  }
}

TEST(Records, CsvHeaderAndRoundTrip) {
  auto records = sample_records();
  records[0].round = 3;
  records[1].value = 0.1 + 0.2;
  const std::string csv = format_records_csv(records);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kRecordsHeader);
  const auto back = parse_records_csv(csv);
  ASSERT_EQ(back.size(), records.size());
  EXPECT_EQ(back[0].round, 3);
  EXPECT_FALSE(back[2].round.has_value());
  EXPECT_EQ(back[1].value, 0.1 + 0.2);
  EXPECT_EQ(format_records_csv(back), csv);
}

TEST(Records, PoisonedFractionTolerance) {
  EXPECT_NEAR(poisoned_fraction_tolerance(0.4, 100), 3 * std::sqrt(0.24 / 100), 1e-15);
  EXPECT_EQ(poisoned_fraction_tolerance(0.0, 100), 0.0);
}

TEST(Seeds, ReplicationsAndStreamsDiffer) {
  const auto a = ReplicationSeeds::derive(1, 0);
  const auto b = ReplicationSeeds::derive(1, 1);
  EXPECT_NE(a.tasks, b.tasks);
  EXPECT_NE(a.tasks, a.adversarial);
  EXPECT_NE(a.evaluation, a.uniform_attack);
  EXPECT_NE(a.target(VictimId::kTs), a.target(VictimId::kUcb));
  EXPECT_EQ(ReplicationSeeds::derive(1, 1).tasks, b.tasks);
}

ExperimentConfig tiny_pipeline() {
  auto c = ExperimentConfig::resolve(
      "env = bandit\n"
      "horizon = 12\n"
      "num_tasks = 3\n"
      "num_rounds = 2\n"
      "iterations_per_round = 2\n"
      "replications = 2\n"
      "pretrain_samples = 16\n"
      "pretrain_epochs = 1\n"
      "pretrain_batch = 4\n"
      "num_layers = 1\n"
      "num_heads = 1\n"
      "embed_dim = 8\n"
      "algorithms = AT-DPT, DPT-frozen, TS, UCB\n"
      "targets = AT-DPT, TS\n",
      false);
  c.validate();
  return c;
}

TEST(Pipeline, RecordCountAndColumns) {
  const auto cfg = tiny_pipeline();
  const Transformer model = pretrain_model(cfg);
  const auto out = run_evaluation_matrix(cfg, &model);
  // 4 algorithms x (2 targets + uniform + clean) x 2 replications
  ASSERT_EQ(out.records.size(), 32u);
  for (const auto& r : out.records) {
    EXPECT_TRUE(std::isfinite(r.value));
    EXPECT_EQ(r.metric, "cumulative_regret");
    EXPECT_FALSE(r.round.has_value());
    if (r.attacker_target == "clean") {
      EXPECT_EQ(r.poisoned_fraction, 0.0);
    } else {
      // 3 tasks x 12 steps of coin flips per cell
      EXPECT_LE(std::abs(r.poisoned_fraction - cfg.epsilon), poisoned_fraction_tolerance(cfg.epsilon, 36)) << r.algorithm;
    }
  }
  // Curves: AT-DPT training plus one per trained target, per round and replication.
  EXPECT_EQ(out.curves.size(), 2u * 2u * 2u);
}

TEST(Pipeline, DeterministicBytes) {
  const auto cfg = tiny_pipeline();
  const Transformer a = pretrain_model(cfg);
  const Transformer b = pretrain_model(cfg);
  EXPECT_EQ(encode_tensor_file(transformer_records(a)), encode_tensor_file(transformer_records(b)));
  const auto x = run_evaluation_matrix(cfg, &a);
  const auto y = run_evaluation_matrix(cfg, &b);
  EXPECT_EQ(format_records_csv(x.records), format_records_csv(y.records));
  EXPECT_EQ(format_records_csv(x.curves), format_records_csv(y.curves));
}

TEST(Pipeline, DumpedConfigReproducesRun) {
  const auto cfg = tiny_pipeline();
  const auto again = ExperimentConfig::resolve(cfg.dump(), false);
  const Transformer a = pretrain_model(cfg);
  const Transformer b = pretrain_model(again);
  EXPECT_EQ(format_records_csv(run_evaluation_matrix(cfg, &a).records),
            format_records_csv(run_evaluation_matrix(again, &b).records));
}

TEST(Pipeline, SingleBudgetSweepMatchesMatrix) {
  auto cfg = tiny_pipeline();
  cfg.replications = 1;
  const Transformer model = pretrain_model(cfg);
  const auto sweep = budget_sweep(cfg, {cfg.budget}, &model);
  ASSERT_EQ(sweep.size(), 1u);
  EXPECT_EQ(format_records_csv(sweep[0].output.records), format_records_csv(run_evaluation_matrix(cfg, &model).records));
}

TEST(Pipeline, MissingCheckpointIsNamed) {
  try {
    load_required_checkpoint("/nonexistent/pretrained.ckpt");
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("missing checkpoint: /nonexistent/pretrained.ckpt"), std::string::npos);
  }
}

TEST(Pipeline, AttackersSaveAndLoad) {
  const auto cfg = tiny_pipeline();
  const auto dist = cfg.distribution();
  const auto tasks = sample_tasks(dist, cfg.num_tasks, 3);
  auto run = train_target_attackers(cfg, VictimId::kTs, tasks, nullptr, 4);
  const auto path = (fs::temp_directory_path() / "ricl_attackers_test.tensors").string();
  save_attackers(path, run.attackers);
  const auto back = load_attackers(path, cfg, dist);
  ASSERT_EQ(back.size(), run.attackers.size());
  for (int i = 0; i < back.size(); ++i) {
    const auto want = run.attackers.gaussian()[i].mean_shift();
    const auto got = back.gaussian()[i].mean_shift();
    for (std::size_t k = 0; k < want.size(); ++k) EXPECT_EQ(got[k], static_cast<double>(static_cast<float>(want[k])));
  }
  fs::remove(path);
}

// ---------------------------------------------------------------------------
// Command line

struct CliResult {
  int status = 0;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const auto log = fs::temp_directory_path() / "ricl_cli_test.log";
  const std::string cmd = std::string(RICL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.output = read_file(log.string());
  return r;
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

TEST(Cli, MissingConfigFails) {
  const auto r = run_cli("evaluate --config /nonexistent/missing.cfg");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("missing.cfg"), std::string::npos) << r.output;
}

TEST(Cli, UnknownFlagFails) {
  EXPECT_NE(run_cli("pretrain --no-such-flag").status, 0);
  EXPECT_NE(run_cli("").status, 0);
}

TEST(Cli, PretrainTwiceGivesIdenticalCheckpoints) {
  const auto dir = scratch_dir("ricl_cli_pretrain");
  write_text(dir / "tiny.cfg", tiny_pipeline().dump());
  const std::string cfg = (dir / "tiny.cfg").string();
  const auto a = run_cli("pretrain --config " + cfg + " --seed 7 --out " + (dir / "a").string());
  const auto b = run_cli("pretrain --config " + cfg + " --seed 7 --out " + (dir / "b").string());
  ASSERT_EQ(a.status, 0) << a.output;
  ASSERT_EQ(b.status, 0) << b.output;
  EXPECT_NE(a.output.find("# resolved configuration"), std::string::npos);
  EXPECT_NE(a.output.find("seed = 7"), std::string::npos);
  EXPECT_EQ(read_file((dir / "a" / "pretrained.ckpt").string()), read_file((dir / "b" / "pretrained.ckpt").string()));
  fs::remove_all(dir);
}

TEST(Cli, EvaluateThenSummarize) {
  const auto dir = scratch_dir("ricl_cli_eval");
  auto cfg = tiny_pipeline();
  cfg.algorithms = {"TS", "UCB"};
  cfg.targets = {"TS"};
  write_text(dir / "tiny.cfg", cfg.dump());
  const auto r = run_cli("evaluate --config " + (dir / "tiny.cfg").string() + " --out " + dir.string());
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string records = read_file((dir / "records.csv").string());
  EXPECT_EQ(records.substr(0, records.find('\n')), kRecordsHeader);
  const auto s = run_cli("summarize --input " + (dir / "records.csv").string() + " --out " + (dir / "s").string());
  ASSERT_EQ(s.status, 0) << s.output;
  const std::string summary = read_file((dir / "s" / "summary.csv").string());
  EXPECT_EQ(summary, format_summary_csv(summarize(parse_records_csv(records))));
  fs::remove_all(dir);
}

TEST(Cli, EvaluateWithoutCheckpointNamesIt) {
  const auto dir = scratch_dir("ricl_cli_missing");
  auto cfg = tiny_pipeline();
  cfg.train_inline = false;
  write_text(dir / "tiny.cfg", cfg.dump());
  const auto r = run_cli("evaluate --config " + (dir / "tiny.cfg").string() + " --out " + dir.string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("missing checkpoint"), std::string::npos) << r.output;
  fs::remove_all(dir);
}

}  // namespace
}  // namespace ricl
