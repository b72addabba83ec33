#include "ricl/config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

#include "ricl/checkpoint.hpp"
#include "ricl/dpt.hpp"

namespace ricl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw std::runtime_error(key + ": not an integer: " + v);
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::runtime_error(key + ": not an unsigned integer: " + v);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw std::runtime_error(key + ": not a number: " + v);
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error(key + ": expected true or false, got " + v);
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string join(const std::vector<double>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + fmt(items[i]);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("line " + std::to_string(number) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("line " + std::to_string(number) + ": empty key");
    for (const auto& kv : out) {
      if (kv.first == key) throw std::runtime_error("line " + std::to_string(number) + ": repeated key " + key);
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ExperimentConfig ExperimentConfig::defaults(EnvKind env) {
  ExperimentConfig c;
  c.env = env;
  switch (env) {
    case EnvKind::kBandit:
      c.algorithms = {"AT-DPT", "DPT-frozen", "TS", "RTS-tuned", "RTS-unknown", "RTS-known",
                      "UCB", "crUCB-orig", "crUCB-lowsigma0", "crUCB-mod"};
      c.targets = {"AT-DPT", "DPT-frozen", "TS", "RTS-tuned", "UCB", "crUCB-orig", "crUCB-lowsigma0", "crUCB-mod"};
      c.budgets = {1.0, 3.0, 5.0};
      break;
    case EnvKind::kLinear:
      c.num_actions = 10;
      c.dim = 2;
      c.horizon = 200;
      c.algorithms = {"AT-DPT", "DPT-frozen", "LinUCB", "CRLinUCB-v1", "CRLinUCB-v2", "CRLinUCB-v3"};
      c.targets = c.algorithms;
      c.budgets = {1.0, 3.0, 5.0};
      break;
    case EnvKind::kDarkroom2:
      c.horizon = 200;
      c.budget = 10.0;
      c.num_rounds = 400;
      c.victim_lr = 3e-5;
      c.pretrain_lr = 1e-4;
      c.pretrain_epochs = 150;
      c.algorithms = {"AT-DPT", "DPT-frozen", "NPG", "Q-learning"};
      c.targets = c.algorithms;
      c.budgets = {5.0, 10.0};
      break;
  }
  return c;
}

void ExperimentConfig::apply_desk_scale() {
  num_tasks = 32;
  replications = 5;
  num_rounds = 20;
  pretrain_epochs = 40;
  pretrain_samples = 1000;
  pretrain_batch = 4;
  pretrain_lr = 1e-3;
  // Twenty rounds is too short for the AT-DPT victim to recover at 1e-4.
  victim_lr = 1e-3;
  switch (env) {
    case EnvKind::kBandit:
      horizon = 200;
      break;
    case EnvKind::kLinear:
      horizon = 100;
      break;
    case EnvKind::kDarkroom2:
      horizon = 100;
      num_rounds = 30;
      pretrain_batch = 8;
      pretrain_samples = 2000;
      pretrain_epochs = 20;
      break;
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& v) {
  if (key == "env") {
    env = parse_env_kind(v);
  } else if (key == "seed") {
    seed = to_u64(key, v);
  } else if (key == "num_actions") {
    num_actions = to_int(key, v);
  } else if (key == "dim") {
    dim = to_int(key, v);
  } else if (key == "grid_side") {
    grid_side = to_int(key, v);
  } else if (key == "horizon") {
    horizon = to_int(key, v);
  } else if (key == "noise_std") {
    noise_std = to_double(key, v);
  } else if (key == "epsilon") {
    epsilon = to_double(key, v);
  } else if (key == "budget") {
    budget = to_double(key, v);
  } else if (key == "sigma_budget") {
    sigma_budget = to_double(key, v);
  } else if (key == "lambda") {
    lambda = to_double(key, v);
  } else if (key == "score_mean_over_steps") {
    score_mean_over_steps = to_bool(key, v);
  } else if (key == "num_tasks") {
    num_tasks = to_int(key, v);
  } else if (key == "num_rounds") {
    num_rounds = to_int(key, v);
  } else if (key == "iterations_per_round") {
    iterations_per_round = to_int(key, v);
  } else if (key == "multi_episode_rounds") {
    multi_episode_rounds = to_int(key, v);
  } else if (key == "warmup_episodes") {
    warmup_episodes = to_int(key, v);
  } else if (key == "replications") {
    replications = to_int(key, v);
  } else if (key == "victim_lr") {
    victim_lr = to_double(key, v);
  } else if (key == "attacker_lr") {
    attacker_lr = to_double(key, v);
  } else if (key == "attacker_init_std") {
    attacker_init_std = to_double(key, v);
  } else if (key == "adaptive_attacker") {
    adaptive_attacker = to_bool(key, v);
  } else if (key == "adaptive_lr") {
    adaptive_lr = to_double(key, v);
  } else if (key == "pretrain_samples") {
    pretrain_samples = to_int(key, v);
  } else if (key == "pretrain_epochs") {
    pretrain_epochs = to_int(key, v);
  } else if (key == "pretrain_lr") {
    pretrain_lr = to_double(key, v);
  } else if (key == "pretrain_batch") {
    pretrain_batch = to_int(key, v);
  } else if (key == "behavior_policy") {
    parse_behavior_policy(v);
    behavior_policy = v;
  } else if (key == "num_layers") {
    num_layers = to_int(key, v);
  } else if (key == "num_heads") {
    num_heads = to_int(key, v);
  } else if (key == "embed_dim") {
    embed_dim = to_int(key, v);
  } else if (key == "learned_positions") {
    learned_positions = to_bool(key, v);
  } else if (key == "ucb_scale") {
    ucb_scale = to_double(key, v);
  } else if (key == "crucb_sigma0") {
    crucb_sigma0 = to_double(key, v);
  } else if (key == "rts_tuned_bound") {
    rts_tuned_bound = to_double(key, v);
  } else if (key == "rts_known_bound") {
    rts_known_bound = to_double(key, v);
  } else if (key == "linucb_width") {
    linucb_width = to_double(key, v);
  } else if (key == "query_distribution") {
    if (v != "visited-cells") throw std::runtime_error("query_distribution: only visited-cells is implemented");
    query_distribution = v;
  } else if (key == "reset_classical_per_round") {
    if (!to_bool(key, v)) throw std::runtime_error("reset_classical_per_round: only true is implemented");
    reset_classical_per_round = true;
  } else if (key == "cross_seed_pairing") {
    if (v != "next-replication") throw std::runtime_error("cross_seed_pairing: only next-replication is implemented");
    cross_seed_pairing = v;
  } else if (key == "algorithms") {
    algorithms = split_list(v);
  } else if (key == "targets") {
    targets = split_list(v);
  } else if (key == "budgets") {
    budgets.clear();
    for (const auto& b : split_list(v)) budgets.push_back(to_double(key, b));
  } else if (key == "checkpoint_interval") {
    checkpoint_interval = to_int(key, v);
  } else if (key == "pretrained_checkpoint") {
    pretrained_checkpoint = v;
  } else if (key == "train_inline") {
    train_inline = to_bool(key, v);
  } else {
    throw std::runtime_error("unknown config key: " + key);
  }
}

void ExperimentConfig::apply(const std::string& text) {
  const auto kv = parse_key_values(text);
  // The environment decides the defaults every other key refines.
  for (const auto& [k, v] : kv) {
    if (k == "env") set(k, v);
  }
  for (const auto& [k, v] : kv) {
    if (k != "env") set(k, v);
  }
}

ExperimentConfig ExperimentConfig::resolve(const std::string& text, bool desk_scale) {
  const auto kv = parse_key_values(text);
  EnvKind env = EnvKind::kBandit;
  for (const auto& [k, v] : kv) {
    if (k == "env") env = parse_env_kind(v);
  }
  ExperimentConfig c = defaults(env);
  if (desk_scale) c.apply_desk_scale();
  for (const auto& [k, v] : kv) c.set(k, v);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path, bool desk_scale) {
  return resolve(read_file(path), desk_scale);
}

std::string ExperimentConfig::dump() const {
  std::ostringstream o;
  o << "env = " << to_string(env) << "\n";
  o << "seed = " << seed << "\n";
  o << "num_actions = " << num_actions << "\n";
  o << "dim = " << dim << "\n";
  o << "grid_side = " << grid_side << "\n";
  o << "horizon = " << horizon << "\n";
  o << "noise_std = " << fmt(noise_std) << "\n";
  o << "epsilon = " << fmt(epsilon) << "\n";
  o << "budget = " << fmt(budget) << "\n";
  o << "sigma_budget = " << fmt(sigma_budget) << "\n";
  o << "lambda = " << fmt(lambda) << "\n";
  o << "score_mean_over_steps = " << (score_mean_over_steps ? "true" : "false") << "\n";
  o << "num_tasks = " << num_tasks << "\n";
  o << "num_rounds = " << num_rounds << "\n";
  o << "iterations_per_round = " << iterations_per_round << "\n";
  o << "multi_episode_rounds = " << multi_episode_rounds << "\n";
  o << "warmup_episodes = " << warmup_episodes << "\n";
  o << "replications = " << replications << "\n";
  o << "victim_lr = " << fmt(victim_lr) << "\n";
  o << "attacker_lr = " << fmt(attacker_lr) << "\n";
  o << "attacker_init_std = " << fmt(attacker_init_std) << "\n";
  o << "adaptive_attacker = " << (adaptive_attacker ? "true" : "false") << "\n";
  o << "adaptive_lr = " << fmt(adaptive_lr) << "\n";
  o << "pretrain_samples = " << pretrain_samples << "\n";
  o << "pretrain_epochs = " << pretrain_epochs << "\n";
  o << "pretrain_lr = " << fmt(pretrain_lr) << "\n";
  o << "pretrain_batch = " << pretrain_batch << "\n";
  o << "behavior_policy = " << behavior_policy << "\n";
  o << "num_layers = " << num_layers << "\n";
  o << "num_heads = " << num_heads << "\n";
  o << "embed_dim = " << embed_dim << "\n";
  o << "learned_positions = " << (learned_positions ? "true" : "false") << "\n";
  o << "ucb_scale = " << fmt(ucb_scale) << "\n";
  o << "crucb_sigma0 = " << fmt(crucb_sigma0) << "\n";
  o << "rts_tuned_bound = " << fmt(rts_tuned_bound) << "\n";
  o << "rts_known_bound = " << fmt(rts_known_bound) << "\n";
  o << "linucb_width = " << fmt(linucb_width) << "\n";
  o << "query_distribution = " << query_distribution << "\n";
  o << "reset_classical_per_round = " << (reset_classical_per_round ? "true" : "false") << "\n";
  o << "cross_seed_pairing = " << cross_seed_pairing << "\n";
  o << "algorithms = " << join(algorithms) << "\n";
  o << "targets = " << join(targets) << "\n";
  o << "budgets = " << join(budgets) << "\n";
  o << "checkpoint_interval = " << checkpoint_interval << "\n";
  o << "pretrained_checkpoint = " << pretrained_checkpoint << "\n";
  o << "train_inline = " << (train_inline ? "true" : "false") << "\n";
  return o.str();
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid config: ") + what);
  };
  need(num_actions >= 2, "num_actions must be >= 2");
  need(dim >= 1, "dim must be >= 1");
  need(grid_side >= 2, "grid_side must be >= 2");
  need(horizon >= 1, "horizon must be >= 1");
  need(noise_std > 0, "noise_std must be > 0");
  need(epsilon >= 0 && epsilon <= 1, "epsilon must lie in [0, 1]");
  need(budget >= 0 && sigma_budget >= 0 && lambda >= 0, "budget, sigma_budget and lambda must be >= 0");
  need(num_tasks >= 1, "num_tasks must be >= 1");
  need(num_rounds >= 0 && multi_episode_rounds >= 0, "round counts must be >= 0");
  need(iterations_per_round >= 1, "iterations_per_round must be >= 1");
  need(warmup_episodes >= 0, "warmup_episodes must be >= 0");
  need(replications >= 1, "replications must be >= 1");
  need(victim_lr > 0 && attacker_lr > 0 && adaptive_lr > 0 && pretrain_lr > 0, "learning rates must be > 0");
  need(attacker_init_std > 0, "attacker_init_std must be > 0");
  need(pretrain_samples >= 1 && pretrain_epochs >= 0 && pretrain_batch >= 1, "pretraining sizes must be positive");
  need(num_layers >= 1 && num_heads >= 1 && embed_dim % num_heads == 0, "embed_dim must be divisible by num_heads");
  need(checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
  for (const auto& a : algorithms) {
    const VictimId id = parse_victim_id(a);
    if (!supports_env(id, env)) throw std::invalid_argument("algorithm " + a + " does not support " + std::string(to_string(env)));
  }
  for (const auto& t : targets) {
    const VictimId id = parse_victim_id(t);
    if (!supports_env(id, env)) throw std::invalid_argument("target " + t + " does not support " + std::string(to_string(env)));
  }
  for (double b : budgets) need(b >= 0, "budgets must be >= 0");
}

TaskDistribution ExperimentConfig::distribution() const {
  switch (env) {
    case EnvKind::kBandit:
      return TaskDistribution::bandit(num_actions, horizon, noise_std);
    case EnvKind::kLinear: {
      Rng rng = Rng::substream(seed, 0, 0, StreamTag::kFeatures);
      return TaskDistribution::linear(num_actions, dim, horizon, rng, noise_std);
    }
    case EnvKind::kDarkroom2:
      return TaskDistribution::darkroom2(grid_side, horizon);
  }
  throw std::logic_error("unreachable");
}

VictimSettings ExperimentConfig::victim_settings() const {
  VictimSettings s;
  s.epsilon = epsilon;
  s.budget = budget;
  s.crucb_sigma0 = crucb_sigma0;
  s.ucb_scale = ucb_scale;
  s.linucb_width = linucb_width;
  s.rts_tuned_bound = rts_tuned_bound;
  s.rts_known_bound = rts_known_bound;
  return s;
}

}  // namespace ricl
