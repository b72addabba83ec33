#include "ricl/dpt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ricl {

void ContextBuffer::push(const Transition& t) {
  victim_.push_back({t.state, t.action, t.observed_reward, t.next_state});
  attacker_.push_back({t.state, t.action, t.clean_reward, t.next_state});
  if (static_cast<int>(victim_.size()) > capacity_) {
    victim_.erase(victim_.begin());
    attacker_.erase(attacker_.begin());
  }
}

ContextBuffer ContextBuffer::from_trace(const EpisodeTrace& trace, int capacity) {
  ContextBuffer buf(capacity);
  for (const auto& s : trace.steps) buf.push(s.transition);
  return buf;
}

TransformerConfig dpt_config(const TaskDistribution& dist) {
  TransformerConfig cfg;
  cfg.input_width = TokenLayout::for_distribution(dist).width();
  cfg.output_width = dist.action_count();
  cfg.context_capacity = dist.horizon;
  return cfg;
}

// ---------------------------------------------------------------------------

DptAgent::DptAgent(const Transformer& model, TokenLayout layout, bool greedy)
    : model_(&model), layout_(std::move(layout)), decoder_(model), greedy_(greedy) {}

void DptAgent::begin_episode(int start_state) {
  decoder_.reset();
  logits_ = decoder_.push(layout_.encode_query(layout_.kind == EnvKind::kDarkroom2 ? start_state : kDummyState));
}

int DptAgent::act(int, int, Rng& rng) {
  if (greedy_) {
    Eigen::Index best = 0;
    logits_.maxCoeff(&best);
    return static_cast<int>(best);
  }
  const auto p = softmax_row(logits_);
  return static_cast<int>(rng.categorical(p));
}

void DptAgent::observe(const VictimTransition& t) {
  if (decoder_.length() >= model_->config().max_positions()) {
    throw std::runtime_error("episode longer than the model's context capacity");
  }
  logits_ = decoder_.push(layout_.encode(t));
}

// ---------------------------------------------------------------------------

std::string_view to_string(BehaviorPolicy p) { return p == BehaviorPolicy::kUniform ? "uniform" : "dirichlet"; }

BehaviorPolicy parse_behavior_policy(std::string_view text) {
  if (text == "uniform") return BehaviorPolicy::kUniform;
  if (text == "dirichlet") return BehaviorPolicy::kDirichlet;
  throw std::invalid_argument("unknown behavior policy: " + std::string(text));
}

std::vector<int> prefix_targets(const Task& task, const std::vector<VictimTransition>& context, int query_state) {
  std::vector<int> out;
  out.reserve(context.size() + 1);
  out.push_back(optimal_action(task, query_state));
  for (const auto& t : context) out.push_back(optimal_action(task, t.next_state));
  return out;
}

std::vector<PretrainSample> generate_pretrain_dataset(const TaskDistribution& dist, BehaviorPolicy policy, int count,
                                                      std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("pretraining dataset needs count >= 1");
  std::vector<PretrainSample> out;
  out.reserve(static_cast<std::size_t>(count));
  const int na = dist.action_count();
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i), 0, StreamTag::kPretrainData);
    const Task task = dist.sample(rng);
    std::vector<double> weights(static_cast<std::size_t>(na), 1.0);
    if (policy == BehaviorPolicy::kDirichlet) {
      // Dirichlet(1): normalized unit exponentials.
      for (auto& w : weights) w = -std::log(1.0 - rng.uniform());
    }
    PretrainSample s;
    int state = start_state(task);
    for (int h = 0; h < horizon_of(task); ++h) {
      const int a = static_cast<int>(rng.categorical(weights));
      const StepResult r = step(task, state, a, rng);
      s.context.push_back({state, a, r.reward, r.next_state});
      state = r.next_state;
    }
    s.query_state = kind_of(task) == EnvKind::kDarkroom2 ? static_cast<int>(rng.index(num_states(task))) : kDummyState;
    s.optimal_action = optimal_action(task, s.query_state);
    s.targets = prefix_targets(task, s.context, s.query_state);
    out.push_back(std::move(s));
  }
  return out;
}

double supervised_step(Transformer& model, const std::vector<Mat>& sequences, const std::vector<std::vector<int>>& targets,
                       double learning_rate, ForwardCache& cache, int chunk) {
  if (sequences.empty() || sequences.size() != targets.size()) {
    throw std::invalid_argument("supervised_step needs one target list per sequence");
  }
  model.params().zero_grad();
  const double inv = 1.0 / static_cast<double>(sequences.size());
  double loss = 0.0;
  for (std::size_t c0 = 0; c0 < sequences.size(); c0 += static_cast<std::size_t>(chunk)) {
    const std::size_t c1 = std::min(sequences.size(), c0 + static_cast<std::size_t>(chunk));
    std::vector<Mat> batch(sequences.begin() + c0, sequences.begin() + c1);
    const auto logits = model.forward(batch, cache);
    std::vector<Mat> grads(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      loss += nll_loss(logits[k], targets[c0 + k], &grads[k]) * inv;
      grads[k] *= inv;
    }
    model.backward(cache, grads);
  }
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite training loss");
  optimizer_step(model.params(), learning_rate);
  return loss;
}

PretrainReport pretrain(Transformer& model, const TokenLayout& layout, const std::vector<PretrainSample>& dataset,
                        const PretrainConfig& cfg, std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("pretraining dataset is empty");
  std::vector<Mat> seqs;
  std::vector<std::vector<int>> targets;
  seqs.reserve(dataset.size());
  for (const auto& s : dataset) {
    seqs.push_back(encode_context(layout, s.context, s.query_state));
    targets.push_back(s.targets);
  }
  PretrainReport report;
  ForwardCache cache;
  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::substream(seed, 0, static_cast<std::uint64_t>(epoch), StreamTag::kTraining);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Mat> batch;
      std::vector<std::vector<int>> batch_targets;
      for (std::size_t i = b0; i < b1; ++i) {
        batch.push_back(seqs[order[i]]);
        batch_targets.push_back(targets[order[i]]);
      }
      double loss = 0.0;
      try {
        loss = supervised_step(model, batch, batch_targets, cfg.learning_rate, cache, cfg.batch_size);
      } catch (const std::runtime_error&) {
        throw std::runtime_error("pretraining diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
      }
      total += loss;
      ++batches;
    }
    report.epoch_loss.push_back(total / batches);
  }
  return report;
}

// ---------------------------------------------------------------------------

Deployment deploy_in_context(const Transformer& model, const Task& task, Attacker* attacker, double epsilon,
                             RolloutStreams& streams, bool greedy) {
  if (model.config().context_capacity < horizon_of(task)) {
    throw std::invalid_argument("model context capacity is shorter than the horizon");
  }
  DptAgent agent(model, TokenLayout::for_task(task), greedy);
  EpisodeTrace trace = run_episode(agent, task, attacker, epsilon, streams);
  ContextBuffer ctx = ContextBuffer::from_trace(trace, model.config().context_capacity);
  return {std::move(trace), std::move(ctx)};
}

double episode_metric(const Task& task, const EpisodeTrace& trace) {
  if (kind_of(task) == EnvKind::kDarkroom2) return trace.clean_return;
  return cumulative_regret(task, trace.actions);
}

std::string_view metric_name(EnvKind kind) {
  return kind == EnvKind::kDarkroom2 ? "episode_reward" : "cumulative_regret";
}

// ---------------------------------------------------------------------------

AttackerSet AttackerSet::direct(const TaskDistribution& dist, int num_tasks, double init_std) {
  AttackerSet set;
  set.kind_ = AttackerKind::kDirect;
  set.num_tasks_ = num_tasks;
  for (int i = 0; i < num_tasks; ++i) {
    if (dist.kind == EnvKind::kDarkroom2) {
      set.categorical_.emplace_back(dist.state_count(), dist.action_count());
    } else {
      set.gaussian_.emplace_back(1, dist.action_count(), init_std);
    }
  }
  set.baselines_.resize(static_cast<std::size_t>(num_tasks));
  return set;
}

AttackerSet AttackerSet::adaptive(const TaskDistribution& dist, int num_tasks, TransformerConfig cfg,
                                  std::uint64_t seed) {
  AttackerSet set;
  set.kind_ = AttackerKind::kAdaptive;
  set.num_tasks_ = num_tasks;
  Rng init = Rng::substream(seed, 0, 0, StreamTag::kInit);
  AttackerTokenLayout layout{TokenLayout::for_distribution(dist)};
  set.adaptive_ = std::make_unique<AdaptiveAttacker>(layout, cfg, init);
  set.baselines_.resize(static_cast<std::size_t>(num_tasks));
  return set;
}

AttackerSet AttackerSet::adaptive(const TaskDistribution& dist, int num_tasks, Transformer model) {
  AttackerSet set;
  set.kind_ = AttackerKind::kAdaptive;
  set.num_tasks_ = num_tasks;
  set.adaptive_ = std::make_unique<AdaptiveAttacker>(AttackerTokenLayout{TokenLayout::for_distribution(dist)}, std::move(model));
  set.baselines_.resize(static_cast<std::size_t>(num_tasks));
  return set;
}

AttackerSet AttackerSet::uniform_random(const TaskDistribution& dist, int num_tasks, double budget,
                                        std::uint64_t seed) {
  AttackerSet set;
  set.kind_ = AttackerKind::kDirect;
  set.num_tasks_ = num_tasks;
  set.trainable_ = false;
  const int ns = dist.kind == EnvKind::kDarkroom2 ? dist.state_count() : 1;
  for (int i = 0; i < num_tasks; ++i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i), 0, StreamTag::kUniformAttack);
    set.gaussian_.push_back(
        BanditAttacker::fixed(ns, dist.action_count(), uniform_random_attack(ns * dist.action_count(), budget, rng)));
  }
  set.baselines_.resize(static_cast<std::size_t>(num_tasks));
  return set;
}

AttackerSet::AttackerSet(const AttackerSet& other)
    : kind_(other.kind_),
      num_tasks_(other.num_tasks_),
      trainable_(other.trainable_),
      gaussian_(other.gaussian_),
      categorical_(other.categorical_),
      adaptive_(other.adaptive_ ? std::make_unique<AdaptiveAttacker>(*other.adaptive_) : nullptr),
      baselines_(other.baselines_) {}

AttackerSet& AttackerSet::operator=(const AttackerSet& other) {
  if (this != &other) {
    AttackerSet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Attacker* AttackerSet::for_task(int task) {
  if (task < 0 || task >= num_tasks_) throw std::out_of_range("attacker index out of range");
  if (adaptive_) return adaptive_.get();
  if (!gaussian_.empty()) return &gaussian_[static_cast<std::size_t>(task)];
  return &categorical_[static_cast<std::size_t>(task)];
}

void AttackerSet::update(const std::vector<EpisodeTrace>& traces, const AttackConfig& cfg, double learning_rate,
                         int iterations) {
  if (static_cast<int>(traces.size()) != num_tasks_) throw std::invalid_argument("one trace per task expected");
  if (!trainable_) return;
  std::vector<std::vector<double>> adv(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) adv[i] = baselines_[i].advance(traces[i]);
  if (adaptive_) {
    reinforce_update(*adaptive_, traces, adv, cfg, learning_rate, iterations);
    return;
  }
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!gaussian_.empty()) {
      reinforce_update(gaussian_[i], {traces[i]}, {adv[i]}, cfg, learning_rate, iterations);
    } else {
      reinforce_update(categorical_[i], {traces[i]}, {adv[i]}, cfg, learning_rate, iterations);
    }
  }
}

double AttackerSet::mean_shift_norm() const {
  double total = 0.0;
  for (const auto& a : gaussian_) total += l2_norm(a.mean_shift());
  for (const auto& a : categorical_) total += l2_norm(a.mean_shift());
  const std::size_t n = gaussian_.size() + categorical_.size();
  return n ? total / static_cast<double>(n) : 0.0;
}

namespace {

bool attackers_finite(AttackerSet& set) {
  for (const auto& a : set.gaussian()) {
    if (!a.params().all_finite()) return false;
  }
  for (const auto& a : set.categorical()) {
    if (!a.params().all_finite()) return false;
  }
  if (set.shared() && !set.shared()->model().params().all_finite()) return false;
  return true;
}

int query_state_for(const Task& task, const EpisodeTrace& trace, std::uint64_t seed, int task_index, int round) {
  if (kind_of(task) != EnvKind::kDarkroom2) return kDummyState;
  Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(task_index), static_cast<std::uint64_t>(round),
                           StreamTag::kQuery);
  std::set<int> visited;
  for (const auto& s : trace.steps) {
    visited.insert(s.transition.state);
    visited.insert(s.transition.next_state);
  }
  if (visited.empty()) return static_cast<int>(rng.index(num_states(task)));
  auto it = visited.begin();
  std::advance(it, static_cast<long>(rng.index(visited.size())));
  return *it;
}

}  // namespace

RoundMetrics adversarial_round(AdversarialState& state, const RoundConfig& cfg, int round_index) {
  if (static_cast<int>(state.tasks.size()) != state.attackers.size()) {
    throw std::invalid_argument("adversarial round needs one attacker per task");
  }
  const Transformer model_snapshot = state.model;
  const AttackerSet attacker_snapshot = state.attackers;

  RoundMetrics m;
  m.round = round_index;
  const std::size_t n = state.tasks.size();
  std::vector<EpisodeTrace> traces(n);
  for (std::size_t i = 0; i < n; ++i) {
    RolloutStreams streams = RolloutStreams::derive(state.seed, i, static_cast<std::uint64_t>(round_index));
    DptAgent agent(state.model, state.layout);
    traces[i] = run_episode(agent, state.tasks[i], state.attackers.for_task(static_cast<int>(i)), cfg.attack.epsilon,
                            streams);
    m.mean_metric += episode_metric(state.tasks[i], traces[i]) / static_cast<double>(n);
    m.poisoned_fraction += traces[i].poisoned_fraction() / static_cast<double>(n);
  }

  state.attackers.update(traces, cfg.attack, cfg.attacker_lr, cfg.iterations_per_round);
  m.attacker_norm = state.attackers.mean_shift_norm();

  bool ok = attackers_finite(state.attackers);
  if (ok && !cfg.frozen_victim) {
    std::vector<Mat> seqs(n);
    std::vector<std::vector<int>> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ContextBuffer ctx = ContextBuffer::from_trace(traces[i], state.model.config().context_capacity);
      const int q = query_state_for(state.tasks[i], traces[i], state.seed, static_cast<int>(i), round_index);
      seqs[i] = encode_context(state.layout, ctx.victim_view(), q);
      targets[i] = prefix_targets(state.tasks[i], ctx.victim_view(), q);
    }
    ForwardCache cache;
    try {
      for (int it = 0; it < cfg.iterations_per_round; ++it) {
        supervised_step(state.model, seqs, targets, cfg.victim_lr, cache, cfg.chunk);
      }
    } catch (const std::runtime_error&) {
      ok = false;
    }
    ok = ok && state.model.params().all_finite();
  }
  if (!ok) {
    state.model = model_snapshot;
    state.attackers = attacker_snapshot;
    m.aborted = true;
  }
  return m;
}

AdversarialResult run_adversarial_training(AdversarialState& state, const RoundConfig& cfg,
                                           const std::function<void(int, const AdversarialState&)>& on_round) {
  AdversarialResult result;
  for (int r = 0; r < cfg.num_rounds; ++r) {
    result.curve.push_back(adversarial_round(state, cfg, r));
    if (on_round) on_round(r, state);
  }
  return result;
}

std::vector<Task> sample_tasks(const TaskDistribution& dist, int count, std::uint64_t seed) {
  std::vector<Task> tasks;
  tasks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i), 0, StreamTag::kTaskSampling);
    tasks.push_back(dist.sample(rng));
  }
  return tasks;
}

EpisodeTrace evaluate_victim(VictimId victim, const Task& task, Attacker* attacker, double epsilon,
                             RolloutStreams& streams, const VictimSettings& settings, const Transformer* model,
                             int warmup_episodes) {
  if (!supports_env(victim, kind_of(task))) {
    throw std::invalid_argument(std::string(to_string(victim)) + " does not support " +
                                std::string(to_string(kind_of(task))));
  }
  if (is_transformer_victim(victim)) {
    if (!model) throw std::invalid_argument(std::string(to_string(victim)) + " needs a transformer model");
    return deploy_in_context(*model, task, attacker, epsilon, streams).trace;
  }
  auto agent = make_classical_victim(victim, task, settings);
  if (is_multi_episode_victim(victim)) return run_multi_episode(*agent, task, attacker, epsilon, streams, warmup_episodes);
  return run_episode(*agent, task, attacker, epsilon, streams);
}

std::vector<RoundMetrics> train_attacker_for_target(VictimId target, const std::vector<Task>& tasks,
                                                    AttackerSet& attackers, const TargetTrainingConfig& cfg,
                                                    const Transformer* model, std::uint64_t seed) {
  if (static_cast<int>(tasks.size()) != attackers.size()) {
    throw std::invalid_argument("attacker training needs one attacker per task");
  }
  std::vector<RoundMetrics> curve;
  const std::size_t n = tasks.size();
  for (int r = 0; r < cfg.round.num_rounds; ++r) {
    RoundMetrics m;
    m.round = r;
    std::vector<EpisodeTrace> traces(n);
    for (std::size_t i = 0; i < n; ++i) {
      RolloutStreams streams = RolloutStreams::derive(seed, i, static_cast<std::uint64_t>(r));
      traces[i] = evaluate_victim(target, tasks[i], attackers.for_task(static_cast<int>(i)), cfg.round.attack.epsilon,
                                  streams, cfg.victim, model, cfg.warmup_episodes);
      m.mean_metric += episode_metric(tasks[i], traces[i]) / static_cast<double>(n);
      m.poisoned_fraction += traces[i].poisoned_fraction() / static_cast<double>(n);
    }
    const AttackerSet snapshot = attackers;
    attackers.update(traces, cfg.round.attack, cfg.round.attacker_lr, cfg.round.iterations_per_round);
    if (!attackers_finite(attackers)) {
      attackers = snapshot;
      m.aborted = true;
    }
    m.attacker_norm = attackers.mean_shift_norm();
    curve.push_back(m);
  }
  return curve;
}

}  // namespace ricl
