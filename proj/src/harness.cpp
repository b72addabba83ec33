#include "ricl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "ricl/checkpoint.hpp"

namespace ricl {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_records_csv(const std::vector<MetricRecord>& records) {
  std::string out = kRecordsHeader;
  out += '\n';
  for (const auto& r : records) {
    out += r.env + ',' + r.algorithm + ',' + r.attacker_target + ',' + format_number(r.epsilon) + ',' +
           std::to_string(r.replication) + ',' + (r.round ? std::to_string(*r.round) : std::string()) + ',' + r.metric +
           ',' + format_number(r.value) + ',' + format_number(r.poisoned_fraction) + '\n';
  }
  return out;
}

namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad number in CSV: " + s);
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad integer in CSV: " + s);
  return v;
}

}  // namespace

std::vector<MetricRecord> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) throw std::runtime_error("records CSV has the wrong header");
  std::vector<MetricRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 9) throw std::runtime_error("records CSV row has " + std::to_string(f.size()) + " fields");
    MetricRecord r;
    r.env = f[0];
    r.algorithm = f[1];
    r.attacker_target = f[2];
    r.epsilon = parse_double(f[3]);
    r.replication = parse_int(f[4]);
    if (!f[5].empty()) r.round = parse_int(f[5]);
    r.metric = f[6];
    r.value = parse_double(f[7]);
    r.poisoned_fraction = parse_double(f[8]);
    out.push_back(std::move(r));
  }
  return out;
}

double poisoned_fraction_tolerance(double epsilon, long steps) {
  if (steps <= 0) return 0.0;
  return 3.0 * std::sqrt(epsilon * (1.0 - epsilon) / static_cast<double>(steps));
}

// ---------------------------------------------------------------------------

SummaryCell summarize_values(const std::vector<double>& values) {
  SummaryCell c;
  c.n = static_cast<int>(values.size());
  if (values.empty()) return c;
  // Sorted accumulation keeps the result independent of replication order.
  std::vector<double> v = values;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  c.mean = sum / c.n;
  if (c.n < 2) {
    c.singleton = true;
    return c;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - c.mean) * (x - c.mean);
  const double sd = std::sqrt(ss / (c.n - 1));
  c.half_width = 2.0 * sd / std::sqrt(static_cast<double>(c.n));
  return c;
}

std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::string, double, int, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : records) {
    groups[{r.env, r.algorithm, r.attacker_target, r.epsilon, r.round ? *r.round : -1, r.metric}].push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto& [k, values] : groups) {
    SummaryRow row;
    row.env = std::get<0>(k);
    row.algorithm = std::get<1>(k);
    row.attacker_target = std::get<2>(k);
    row.epsilon = std::get<3>(k);
    if (std::get<4>(k) >= 0) row.round = std::get<4>(k);
    row.metric = std::get<5>(k);
    row.cell = summarize_values(values);
    out.push_back(std::move(row));
  }
  return out;
}

std::string format_summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "env,algorithm,attacker_target,epsilon,round,metric,mean,half_width,n,warning\n";
  for (const auto& r : rows) {
    out += r.env + ',' + r.algorithm + ',' + r.attacker_target + ',' + format_number(r.epsilon) + ',' +
           (r.round ? std::to_string(*r.round) : std::string()) + ',' + r.metric + ',' + format_number(r.cell.mean) +
           ',' + format_number(r.cell.half_width) + ',' + std::to_string(r.cell.n) + ',' +
           (r.cell.singleton ? "single-replication" : "") + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

ReplicationSeeds ReplicationSeeds::derive(std::uint64_t experiment_seed, int replication) {
  const auto r = static_cast<std::uint64_t>(replication);
  ReplicationSeeds s;
  s.base = substream_seed(experiment_seed, r, 0, StreamTag::kTraining);
  s.tasks = substream_seed(experiment_seed, r, 0, StreamTag::kTaskSampling);
  s.adversarial = substream_seed(experiment_seed, r, 1, StreamTag::kTraining);
  s.evaluation = substream_seed(experiment_seed, r, 0, StreamTag::kEvaluation);
  s.uniform_attack = substream_seed(experiment_seed, r, 0, StreamTag::kUniformAttack);
  return s;
}

std::uint64_t ReplicationSeeds::target(VictimId id) const {
  return substream_seed(base, static_cast<std::uint64_t>(id), 2, StreamTag::kTraining);
}

TransformerConfig victim_model_config(const ExperimentConfig& cfg) {
  TransformerConfig t = dpt_config(cfg.distribution());
  t.num_layers = cfg.num_layers;
  t.num_heads = cfg.num_heads;
  t.embed_dim = cfg.embed_dim;
  t.learned_positions = cfg.learned_positions;
  return t;
}

RoundConfig round_config(const ExperimentConfig& cfg) {
  RoundConfig r;
  r.num_tasks = cfg.num_tasks;
  r.num_rounds = cfg.num_rounds;
  r.iterations_per_round = cfg.iterations_per_round;
  r.attack.epsilon = cfg.epsilon;
  r.attack.budget = cfg.budget;
  r.attack.sigma_budget = cfg.sigma_budget;
  r.attack.lambda = cfg.lambda;
  r.attack.score_mean_over_steps = cfg.score_mean_over_steps;
  r.victim_lr = cfg.victim_lr;
  r.attacker_lr = cfg.adaptive_attacker ? cfg.adaptive_lr : cfg.attacker_lr;
  return r;
}

Transformer pretrain_model(const ExperimentConfig& cfg, PretrainReport* report, const Logger& log) {
  const TaskDistribution dist = cfg.distribution();
  Rng init = Rng::substream(cfg.seed, 0, 0, StreamTag::kInit);
  Transformer model(victim_model_config(cfg), init);
  const auto data = generate_pretrain_dataset(dist, parse_behavior_policy(cfg.behavior_policy), cfg.pretrain_samples,
                                              substream_seed(cfg.seed, 0, 0, StreamTag::kPretrainData));
  PretrainConfig pc;
  pc.epochs = 1;
  pc.learning_rate = cfg.pretrain_lr;
  pc.batch_size = cfg.pretrain_batch;
  PretrainReport all;
  for (int e = 0; e < cfg.pretrain_epochs; ++e) {
    // One epoch at a time so progress can be logged; the shuffle stream is
    // keyed by the epoch index either way.
    const auto r = pretrain(model, TokenLayout::for_distribution(dist), data, pc,
                            substream_seed(cfg.seed, 0, static_cast<std::uint64_t>(e), StreamTag::kTraining));
    all.epoch_loss.push_back(r.epoch_loss.front());
    if (log) log("pretrain epoch " + std::to_string(e) + " loss " + format_number(r.epoch_loss.front()));
  }
  if (report) *report = all;
  return model;
}

AttackerSet make_attackers(const ExperimentConfig& cfg, const TaskDistribution& dist, std::uint64_t seed) {
  if (cfg.adaptive_attacker) {
    TransformerConfig t;
    t.num_layers = cfg.num_layers;
    t.num_heads = cfg.num_heads;
    t.embed_dim = cfg.embed_dim;
    t.context_capacity = cfg.horizon;
    t.learned_positions = cfg.learned_positions;
    return AttackerSet::adaptive(dist, cfg.num_tasks, t, seed);
  }
  return AttackerSet::direct(dist, cfg.num_tasks, cfg.attacker_init_std);
}

AtDptRun train_at_dpt(const ExperimentConfig& cfg, const Transformer& pretrained, const std::vector<Task>& tasks,
                      std::uint64_t seed, const std::function<void(int, const AdversarialState&)>& on_round) {
  const TaskDistribution dist = cfg.distribution();
  AdversarialState state{pretrained, TokenLayout::for_distribution(dist), tasks, make_attackers(cfg, dist, seed), seed};
  const auto result = run_adversarial_training(state, round_config(cfg), on_round);
  return {std::move(state.model), std::move(state.attackers), result.curve};
}

TargetRun train_target_attackers(const ExperimentConfig& cfg, VictimId target, const std::vector<Task>& tasks,
                                 const Transformer* pretrained, std::uint64_t seed) {
  if (target == VictimId::kAtDpt) throw std::invalid_argument("AT-DPT attackers come from adversarial training");
  const TaskDistribution dist = cfg.distribution();
  TargetTrainingConfig tc;
  tc.round = round_config(cfg);
  tc.round.frozen_victim = true;
  tc.victim = cfg.victim_settings();
  tc.warmup_episodes = cfg.warmup_episodes;
  if (is_multi_episode_victim(target)) tc.round.num_rounds = cfg.multi_episode_rounds;
  TargetRun run{make_attackers(cfg, dist, seed), {}};
  run.curve = train_attacker_for_target(target, tasks, run.attackers, tc, pretrained, seed);
  return run;
}

CellResult evaluate_cell(const ExperimentConfig& cfg, VictimId victim, const std::vector<Task>& tasks,
                         AttackerSet* attackers, const Transformer* model, std::uint64_t eval_seed) {
  const VictimSettings settings = cfg.victim_settings();
  CellResult out;
  long poisoned = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    RolloutStreams streams = RolloutStreams::derive(eval_seed, i, 0);
    Attacker* a = attackers ? attackers->for_task(static_cast<int>(i)) : nullptr;
    const EpisodeTrace trace = evaluate_victim(victim, tasks[i], a, attackers ? cfg.epsilon : 0.0, streams, settings,
                                               model, cfg.warmup_episodes);
    out.value += episode_metric(tasks[i], trace) / static_cast<double>(tasks.size());
    poisoned += trace.poisoned_steps();
    out.steps += static_cast<long>(trace.steps.size());
  }
  out.poisoned_fraction = out.steps ? static_cast<double>(poisoned) / static_cast<double>(out.steps) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

std::string ArtifactStore::pretrained_path() const { return directory + "/pretrained.ckpt"; }

std::string ArtifactStore::at_dpt_path(int replication) const {
  return directory + "/rep" + std::to_string(replication) + "/at_dpt.ckpt";
}

std::string ArtifactStore::attackers_path(int replication, const std::string& target) const {
  return directory + "/rep" + std::to_string(replication) + "/attackers_" + target + ".tensors";
}

Transformer load_required_checkpoint(const std::string& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing checkpoint: " + path);
  return load_transformer(path);
}

namespace {

constexpr const char* kAttackerMeta = "meta.attackers";

std::vector<MetricRecord> curve_records(const ExperimentConfig& cfg, const std::string& algorithm,
                                        const std::string& target, int replication,
                                        const std::vector<RoundMetrics>& curve) {
  std::vector<MetricRecord> out;
  for (const auto& m : curve) {
    MetricRecord r;
    r.env = std::string(to_string(cfg.env));
    r.algorithm = algorithm;
    r.attacker_target = target;
    r.epsilon = cfg.epsilon;
    r.replication = replication;
    r.round = m.round;
    r.metric = std::string(metric_name(cfg.env));
    r.value = m.mean_metric;
    r.poisoned_fraction = m.poisoned_fraction;
    out.push_back(std::move(r));
  }
  return out;
}

bool use_store(const ArtifactStore& store) { return !store.directory.empty(); }

}  // namespace

void save_attackers(const std::string& path, const AttackerSet& attackers) {
  std::vector<TensorRecord> records;
  float kind = 0.0f;
  if (attackers.shared()) {
    kind = 2.0f;
  } else if (!attackers.categorical().empty()) {
    kind = 1.0f;
  }
  records.push_back({kAttackerMeta, {2}, {kind, static_cast<float>(attackers.size())}});
  if (attackers.shared()) {
    for (auto& r : transformer_records(attackers.shared()->model())) records.push_back(std::move(r));
  }
  auto add = [&](const ModelParams& p, std::size_t i) {
    for (const auto& t : p.tensors()) {
      TensorRecord r;
      r.name = "attacker." + std::to_string(i) + "." + t.name;
      r.shape.assign(t.shape.begin(), t.shape.end());
      r.values.assign(t.value.begin(), t.value.end());
      records.push_back(std::move(r));
    }
  };
  for (std::size_t i = 0; i < attackers.gaussian().size(); ++i) add(attackers.gaussian()[i].params(), i);
  for (std::size_t i = 0; i < attackers.categorical().size(); ++i) add(attackers.categorical()[i].params(), i);
  write_tensor_file(path, records);
}

AttackerSet load_attackers(const std::string& path, const ExperimentConfig& cfg, const TaskDistribution& dist) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing attacker checkpoint: " + path);
  auto records = read_tensor_file(path);
  const TensorRecord* meta = nullptr;
  for (const auto& r : records) {
    if (r.name == kAttackerMeta) meta = &r;
  }
  if (!meta || meta->values.size() != 2) throw std::runtime_error(path + " is not an attacker checkpoint");
  const int kind = static_cast<int>(meta->values[0]);
  const int count = static_cast<int>(meta->values[1]);
  if (count != cfg.num_tasks) throw std::runtime_error(path + " holds attackers for a different task count");
  if (kind == 2) {
    std::vector<TensorRecord> model_records;
    for (auto& r : records) {
      if (r.name != kAttackerMeta) model_records.push_back(std::move(r));
    }
    if (!cfg.adaptive_attacker) throw std::runtime_error(path + " holds an adaptive attacker but adaptive_attacker = false");
    return AttackerSet::adaptive(dist, count, transformer_from_records(model_records));
  }
  AttackerSet set = AttackerSet::direct(dist, count, cfg.attacker_init_std);
  for (const auto& r : records) {
    if (r.name == kAttackerMeta) continue;
    const auto first = r.name.find('.');
    const auto second = r.name.find('.', first + 1);
    if (r.name.rfind("attacker.", 0) != 0 || second == std::string::npos) {
      throw std::runtime_error(path + ": unexpected tensor " + r.name);
    }
    const auto index = static_cast<std::size_t>(std::stoul(r.name.substr(first + 1, second - first - 1)));
    const std::string tensor = r.name.substr(second + 1);
    ModelParams* p = nullptr;
    if (kind == 0 && index < set.gaussian().size()) p = &set.gaussian()[index].params();
    if (kind == 1 && index < set.categorical().size()) p = &set.categorical()[index].params();
    if (!p) throw std::runtime_error(path + ": attacker index out of range in " + r.name);
    Tensor& t = p->at(tensor);
    if (t.size() != r.values.size()) throw std::runtime_error(path + ": wrong size for " + r.name);
    t.value.assign(r.values.begin(), r.values.end());
  }
  return set;
}

// ---------------------------------------------------------------------------

ReplicationArtifacts prepare_replication(const ExperimentConfig& cfg, const Transformer* pretrained, int replication,
                                         const ArtifactStore& store, const Logger& log) {
  const TaskDistribution dist = cfg.distribution();
  const ReplicationSeeds seeds = ReplicationSeeds::derive(cfg.seed, replication);
  ReplicationArtifacts art;
  art.tasks = sample_tasks(dist, cfg.num_tasks, seeds.tasks);

  auto needs = [&](const std::string& name) {
    return std::find(cfg.algorithms.begin(), cfg.algorithms.end(), name) != cfg.algorithms.end() ||
           std::find(cfg.targets.begin(), cfg.targets.end(), name) != cfg.targets.end();
  };
  auto require_pretrained = [&]() {
    if (!pretrained) throw std::runtime_error("missing checkpoint: pretrained model");
  };

  const std::string at_name(to_string(VictimId::kAtDpt));
  if (needs(at_name)) {
    const bool cached = use_store(store) && std::filesystem::exists(store.at_dpt_path(replication)) &&
                        std::filesystem::exists(store.attackers_path(replication, at_name));
    if (cached) {
      AtDptRun run{load_transformer(store.at_dpt_path(replication)),
                   load_attackers(store.attackers_path(replication, at_name), cfg, dist),
                   {}};
      art.at_dpt = std::move(run);
      if (log) log("rep " + std::to_string(replication) + ": loaded AT-DPT");
    } else {
      if (use_store(store) && !store.train_inline) throw std::runtime_error("missing checkpoint: " + store.at_dpt_path(replication));
      require_pretrained();
      if (log) log("rep " + std::to_string(replication) + ": adversarial training");
      auto on_round = [&](int r, const AdversarialState& s) {
        if (log) log("  round " + std::to_string(r));
        if (use_store(store) && cfg.checkpoint_interval > 0 && (r + 1) % cfg.checkpoint_interval == 0) {
          save_transformer(store.directory + "/rep" + std::to_string(replication) + "/at_dpt_round" +
                               std::to_string(r + 1) + ".ckpt",
                           s.model);
        }
      };
      art.at_dpt = train_at_dpt(cfg, *pretrained, art.tasks, seeds.adversarial, on_round);
      if (use_store(store)) {
        save_transformer(store.at_dpt_path(replication), art.at_dpt->model);
        save_attackers(store.attackers_path(replication, at_name), art.at_dpt->attackers);
      }
    }
  }

  for (const auto& name : cfg.targets) {
    const VictimId id = parse_victim_id(name);
    if (id == VictimId::kAtDpt) continue;
    const std::string canonical(to_string(id));
    const std::string path = use_store(store) ? store.attackers_path(replication, canonical) : std::string();
    if (use_store(store) && std::filesystem::exists(path)) {
      art.targets[canonical] = TargetRun{load_attackers(path, cfg, dist), {}};
      if (log) log("rep " + std::to_string(replication) + ": loaded attackers for " + canonical);
      continue;
    }
    if (use_store(store) && !store.train_inline) throw std::runtime_error("missing checkpoint: " + path);
    if (is_transformer_victim(id)) require_pretrained();
    if (log) log("rep " + std::to_string(replication) + ": training attackers against " + canonical);
    art.targets[canonical] = train_target_attackers(cfg, id, art.tasks, pretrained, seeds.target(id));
    if (use_store(store)) save_attackers(path, art.targets[canonical].attackers);
  }
  return art;
}

EvaluationOutput run_evaluation_matrix(const ExperimentConfig& cfg, const Transformer* pretrained,
                                       const ArtifactStore& store, const Logger& log) {
  cfg.validate();
  const TaskDistribution dist = cfg.distribution();
  const std::string env(to_string(cfg.env));
  const std::string metric(metric_name(cfg.env));
  const std::string at_name(to_string(VictimId::kAtDpt));

  std::vector<ReplicationArtifacts> reps;
  for (int r = 0; r < cfg.replications; ++r) reps.push_back(prepare_replication(cfg, pretrained, r, store, log));
  if (cfg.replications == 1 && log) log("warning: one replication, AT-DPT is paired with its own attacker");

  EvaluationOutput out;
  for (int r = 0; r < cfg.replications; ++r) {
    auto& art = reps[static_cast<std::size_t>(r)];
    if (art.at_dpt) {
      auto c = curve_records(cfg, at_name, at_name, r, art.at_dpt->curve);
      out.curves.insert(out.curves.end(), c.begin(), c.end());
    }
    for (const auto& [target, run] : art.targets) {
      auto c = curve_records(cfg, target, target, r, run.curve);
      out.curves.insert(out.curves.end(), c.begin(), c.end());
    }
  }

  for (int r = 0; r < cfg.replications; ++r) {
    const ReplicationSeeds seeds = ReplicationSeeds::derive(cfg.seed, r);
    auto& art = reps[static_cast<std::size_t>(r)];
    auto& partner = reps[static_cast<std::size_t>((r + 1) % cfg.replications)];
    const ReplicationSeeds partner_seeds = ReplicationSeeds::derive(cfg.seed, (r + 1) % cfg.replications);
    AttackerSet uniform = AttackerSet::uniform_random(dist, cfg.num_tasks, cfg.budget, seeds.uniform_attack);

    for (const auto& algo_name : cfg.algorithms) {
      const VictimId algo = parse_victim_id(algo_name);
      const std::string algo_canon(to_string(algo));
      const Transformer* model = nullptr;
      if (algo == VictimId::kAtDpt) model = &art.at_dpt->model;
      if (algo == VictimId::kDptFrozen) model = pretrained;
      if (is_transformer_victim(algo) && !model) throw std::runtime_error("missing checkpoint: " + algo_canon);

      auto emit = [&](const std::string& column, const CellResult& c, double eps) {
        out.records.push_back({env, algo_canon, column, eps, r, std::nullopt, metric, c.value, c.poisoned_fraction});
      };

      for (const auto& target_name : cfg.targets) {
        const VictimId target = parse_victim_id(target_name);
        const std::string target_canon(to_string(target));
        if (target == VictimId::kAtDpt) {
          if (algo == VictimId::kAtDpt) {
            // Cross-seed: this replication's model against the partner's attacker and tasks.
            AttackerSet attackers = partner.at_dpt->attackers;
            emit(target_canon,
                 evaluate_cell(cfg, algo, partner.tasks, &attackers, model, partner_seeds.evaluation), cfg.epsilon);
          } else {
            AttackerSet attackers = art.at_dpt->attackers;
            emit(target_canon, evaluate_cell(cfg, algo, art.tasks, &attackers, model, seeds.evaluation), cfg.epsilon);
          }
          continue;
        }
        AttackerSet attackers = art.targets.at(target_canon).attackers;
        emit(target_canon, evaluate_cell(cfg, algo, art.tasks, &attackers, model, seeds.evaluation), cfg.epsilon);
      }
      AttackerSet u = uniform;
      emit("uniform", evaluate_cell(cfg, algo, art.tasks, &u, model, seeds.evaluation), cfg.epsilon);
      emit("clean", evaluate_cell(cfg, algo, art.tasks, nullptr, model, seeds.evaluation), 0.0);
      if (log) log("rep " + std::to_string(r) + ": evaluated " + algo_canon);
    }
  }
  return out;
}

std::vector<BudgetResult> budget_sweep(const ExperimentConfig& cfg, const std::vector<double>& budgets,
                                       const Transformer* pretrained, const Logger& log) {
  if (budgets.empty()) throw std::invalid_argument("budget sweep needs at least one budget");
  std::vector<BudgetResult> out;
  for (double b : budgets) {
    ExperimentConfig c = cfg;
    c.budget = b;
    if (log) log("budget " + format_number(b));
    out.push_back({b, run_evaluation_matrix(c, pretrained, {}, log)});
  }
  return out;
}

}  // namespace ricl
