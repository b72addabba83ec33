#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ricl/checkpoint.hpp"
#include "ricl/config.hpp"
#include "ricl/harness.hpp"

using namespace ricl;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool desk_scale = false;
  std::string target;
  std::string input;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig::resolve("", o.desk_scale)
                                               : ExperimentConfig::load(o.config_path, o.desk_scale);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  std::cout << "# resolved configuration\n" << cfg.dump() << std::flush;
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

bool needs_transformer(const ExperimentConfig& cfg) {
  for (const auto& v : cfg.algorithms) {
    if (is_transformer_victim(parse_victim_id(v))) return true;
  }
  for (const auto& v : cfg.targets) {
    if (is_transformer_victim(parse_victim_id(v))) return true;
  }
  return false;
}

std::string pretrained_path(const ExperimentConfig& cfg, const Options& o) {
  return cfg.pretrained_checkpoint.empty() ? o.out + "/pretrained.ckpt" : cfg.pretrained_checkpoint;
}

Transformer obtain_pretrained(const ExperimentConfig& cfg, const Options& o) {
  const std::string path = pretrained_path(cfg, o);
  if (std::filesystem::exists(path)) return load_transformer(path);
  if (!cfg.train_inline) throw std::runtime_error("missing checkpoint: " + path);
  log_line("no pretrained checkpoint at " + path + ", pretraining inline");
  Transformer model = pretrain_model(cfg, nullptr, log_line);
  save_transformer(path, model);
  return model;
}

void write_csv(const std::string& path, const std::string& text) {
  write_file_atomic(path, text);
  log_line("wrote " + path);
}

int cmd_pretrain(const Options& o) {
  const ExperimentConfig cfg = resolve_config(o);
  PretrainReport report;
  const Transformer model = pretrain_model(cfg, &report, log_line);
  save_transformer(pretrained_path(cfg, o), model);
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
    csv += std::to_string(e) + "," + format_number(report.epoch_loss[e]) + "\n";
  }
  write_csv(o.out + "/pretrain_loss.csv", csv);
  return 0;
}

std::vector<MetricRecord> curve_rows(const ExperimentConfig& cfg, const std::string& name, int rep,
                                     const std::vector<RoundMetrics>& curve) {
  std::vector<MetricRecord> out;
  for (const auto& m : curve) {
    out.push_back({std::string(to_string(cfg.env)), name, name, cfg.epsilon, rep, m.round,
                   std::string(metric_name(cfg.env)), m.mean_metric, m.poisoned_fraction});
  }
  return out;
}

int cmd_train_attacker(const Options& o) {
  ExperimentConfig cfg = resolve_config(o);
  const VictimId target = parse_victim_id(o.target);
  const std::string name(to_string(target));
  if (target == VictimId::kAtDpt) throw std::runtime_error("attackers targeting AT-DPT are trained by adv-train");
  if (!supports_env(target, cfg.env)) throw std::runtime_error(name + " does not support this environment");
  std::optional<Transformer> pretrained;
  if (is_transformer_victim(target)) pretrained = obtain_pretrained(cfg, o);
  const ArtifactStore store{o.out, cfg.train_inline};
  std::vector<MetricRecord> rows;
  for (int r = 0; r < cfg.replications; ++r) {
    const auto seeds = ReplicationSeeds::derive(cfg.seed, r);
    const auto tasks = sample_tasks(cfg.distribution(), cfg.num_tasks, seeds.tasks);
    log_line("rep " + std::to_string(r) + ": training attackers against " + name);
    const TargetRun run =
        train_target_attackers(cfg, target, tasks, pretrained ? &*pretrained : nullptr, seeds.target(target));
    save_attackers(store.attackers_path(r, name), run.attackers);
    const auto c = curve_rows(cfg, name, r, run.curve);
    rows.insert(rows.end(), c.begin(), c.end());
  }
  write_csv(o.out + "/curves_" + name + ".csv", format_records_csv(rows));
  return 0;
}

int cmd_adv_train(const Options& o) {
  const ExperimentConfig cfg = resolve_config(o);
  const Transformer pretrained = obtain_pretrained(cfg, o);
  const ArtifactStore store{o.out, cfg.train_inline};
  const std::string name(to_string(VictimId::kAtDpt));
  std::vector<MetricRecord> rows;
  for (int r = 0; r < cfg.replications; ++r) {
    const auto seeds = ReplicationSeeds::derive(cfg.seed, r);
    const auto tasks = sample_tasks(cfg.distribution(), cfg.num_tasks, seeds.tasks);
    log_line("rep " + std::to_string(r) + ": adversarial training");
    auto on_round = [&](int round, const AdversarialState& s) {
      if (cfg.checkpoint_interval > 0 && (round + 1) % cfg.checkpoint_interval == 0) {
        save_transformer(o.out + "/rep" + std::to_string(r) + "/at_dpt_round" + std::to_string(round + 1) + ".ckpt",
                         s.model);
      }
    };
    const AtDptRun run = train_at_dpt(cfg, pretrained, tasks, seeds.adversarial, on_round);
    save_transformer(store.at_dpt_path(r), run.model);
    save_attackers(store.attackers_path(r, name), run.attackers);
    const auto c = curve_rows(cfg, name, r, run.curve);
    rows.insert(rows.end(), c.begin(), c.end());
  }
  write_csv(o.out + "/curves_" + name + ".csv", format_records_csv(rows));
  return 0;
}

void write_outputs(const std::string& dir, const EvaluationOutput& out) {
  write_csv(dir + "/records.csv", format_records_csv(out.records));
  write_csv(dir + "/curves.csv", format_records_csv(out.curves));
  write_csv(dir + "/summary.csv", format_summary_csv(summarize(out.records)));
}

int cmd_evaluate(const Options& o) {
  const ExperimentConfig cfg = resolve_config(o);
  std::optional<Transformer> pretrained;
  if (needs_transformer(cfg)) pretrained = obtain_pretrained(cfg, o);
  const auto out = run_evaluation_matrix(cfg, pretrained ? &*pretrained : nullptr, {o.out, cfg.train_inline}, log_line);
  write_outputs(o.out, out);
  return 0;
}

int cmd_budget_sweep(const Options& o) {
  const ExperimentConfig cfg = resolve_config(o);
  std::optional<Transformer> pretrained;
  if (needs_transformer(cfg)) pretrained = obtain_pretrained(cfg, o);
  const auto results = budget_sweep(cfg, cfg.budgets, pretrained ? &*pretrained : nullptr, log_line);
  for (const auto& r : results) write_outputs(o.out + "/budget_" + format_number(r.budget), r.output);
  return 0;
}

int cmd_summarize(const Options& o) {
  const std::string input = o.input.empty() ? o.out + "/records.csv" : o.input;
  const auto records = parse_records_csv(read_file(input));
  const std::string csv = format_summary_csv(summarize(records));
  std::cout << csv;
  write_csv(o.out + "/summary.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-poisoning attacks and adversarial training for in-context RL"};
  Options o;
  std::uint64_t seed = 0;
  app.add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "experiment seed (overrides the config)");
  app.add_option("--out", o.out, "output directory")->capture_default_str();
  app.add_flag("--desk-scale", o.desk_scale, "reduced sizes for one CPU");
  app.require_subcommand(1);

  auto* pretrain = app.add_subcommand("pretrain", "pretrain the in-context model");
  auto* train_attacker = app.add_subcommand("train-attacker", "train attackers against one victim");
  train_attacker->add_option("--target", o.target, "victim the attackers target")->required();
  auto* adv = app.add_subcommand("adv-train", "adversarial training of AT-DPT with co-trained attackers");
  auto* evaluate = app.add_subcommand("evaluate", "evaluation matrix: algorithms x attacker targets");
  auto* sweep = app.add_subcommand("budget-sweep", "repeat the matrix for every budget in `budgets`");
  auto* summarize_cmd = app.add_subcommand("summarize", "mean and 2xSEM per cell of a records CSV");
  summarize_cmd->add_option("--input", o.input, "records CSV (default <out>/records.csv)");
  for (auto* sub : {pretrain, train_attacker, adv, evaluate, sweep, summarize_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count() > 0) o.seed = seed;

  try {
    std::filesystem::create_directories(o.out);
    if (*pretrain) return cmd_pretrain(o);
    if (*train_attacker) return cmd_train_attacker(o);
    if (*adv) return cmd_adv_train(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*sweep) return cmd_budget_sweep(o);
    if (*summarize_cmd) return cmd_summarize(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
