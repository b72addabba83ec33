#include "ricl/attackers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ricl {

namespace {

constexpr double kMinLogStd = -6.907755278982137;  // log(1e-3)
constexpr int kAdaptiveChunk = 8;

std::vector<double> softmax3(const double* logits) {
  const double mx = std::max({logits[0], logits[1], logits[2]});
  std::vector<double> p(3);
  double total = 0.0;
  for (int k = 0; k < 3; ++k) {
    p[k] = std::exp(logits[k] - mx);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return p;
}

int count_poisoned(const std::vector<EpisodeTrace>& traces) {
  int n = 0;
  for (const auto& t : traces) n += t.poisoned_steps();
  return n;
}

void check_advantages(const std::vector<EpisodeTrace>& traces, const std::vector<std::vector<double>>& advantages) {
  if (traces.size() != advantages.size()) throw std::invalid_argument("reinforce_update: one advantage list per trace");
  for (std::size_t k = 0; k < traces.size(); ++k) {
    if (traces[k].steps.size() != advantages[k].size()) {
      throw std::invalid_argument("reinforce_update: advantage count must match trace length");
    }
  }
}

/// Adam minimizes, the attacker ascends: gradients are stored negated.
void store_ascent(Tensor& t, const std::vector<double>& ascent) {
  for (std::size_t i = 0; i < t.size(); ++i) t.grad[i] = -ascent[i];
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
  if (!(budget > 0.0)) throw std::invalid_argument("budget must be positive");
  if (!(sigma_budget >= 0.0)) throw std::invalid_argument("sigma budget must be non-negative");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
}

Contamination contaminate(double clean_reward, double attack_reward, double epsilon, Rng& coin) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
  const bool poisoned = coin.bernoulli(epsilon);
  return {poisoned ? attack_reward : clean_reward, poisoned};
}

double hinge(double x, double bound) { return std::max(0.0, x - bound); }

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double EpisodeTrace::poisoned_fraction() const {
  return steps.empty() ? 0.0 : static_cast<double>(poisoned_steps()) / static_cast<double>(steps.size());
}

int EpisodeTrace::poisoned_steps() const {
  int n = 0;
  for (const auto& s : steps) n += s.poisoned ? 1 : 0;
  return n;
}

RolloutStreams RolloutStreams::derive(std::uint64_t seed, std::uint64_t task_index, std::uint64_t round_index) {
  return {Rng::substream(seed, task_index, round_index, StreamTag::kVictim),
          Rng::substream(seed, task_index, round_index, StreamTag::kEnvironment),
          Rng::substream(seed, task_index, round_index, StreamTag::kContamination),
          Rng::substream(seed, task_index, round_index, StreamTag::kAttack)};
}

// ---------------------------------------------------------------------------

BanditAttacker::BanditAttacker(int num_states, int num_actions, double init_std)
    : num_states_(num_states), num_actions_(num_actions) {
  if (num_states < 1 || num_actions < 1) throw std::invalid_argument("attacker needs at least one component");
  const auto n = static_cast<std::size_t>(num_states * num_actions);
  params_.add("mean_shift", {n});
  Tensor& ls = params_.add("log_std", {n});
  const double init = init_std > 0.0 ? std::log(init_std) : -std::numeric_limits<double>::infinity();
  std::fill(ls.value.begin(), ls.value.end(), init);
}

BanditAttacker BanditAttacker::fixed(int num_states, int num_actions, const std::vector<double>& shift) {
  BanditAttacker a(num_states, num_actions, 0.0);
  a.set_mean_shift(shift);
  return a;
}

std::vector<double> BanditAttacker::stds() const {
  std::vector<double> s = params_.at("log_std").value;
  for (double& v : s) v = std::exp(v);
  return s;
}

void BanditAttacker::set_mean_shift(const std::vector<double>& shift) {
  if (static_cast<int>(shift.size()) != num_components()) throw std::invalid_argument("mean shift size mismatch");
  params_.at("mean_shift").value = shift;
}

void BanditAttacker::set_log_std(const std::vector<double>& log_std) {
  if (static_cast<int>(log_std.size()) != num_components()) throw std::invalid_argument("log std size mismatch");
  params_.at("log_std").value = log_std;
}

double BanditAttacker::sample_perturbation(int state, int action, double, Rng& rng) {
  const int i = component(state, action);
  const double mean = params_.at("mean_shift").value[i];
  const double sd = std::exp(params_.at("log_std").value[i]);
  const double z = rng.normal();
  return sd > 0.0 ? mean + sd * z : mean;
}

double BanditAttacker::log_density(int state, int action, double perturbation) const {
  const int i = component(state, action);
  const double mean = params_.at("mean_shift").value[i];
  const double log_sd = params_.at("log_std").value[i];
  const double z = (perturbation - mean) / std::exp(log_sd);
  return -0.5 * z * z - log_sd - 0.5 * std::log(2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------

MdpAttacker::MdpAttacker(int num_states, int num_actions) : num_states_(num_states), num_actions_(num_actions) {
  if (num_states < 1 || num_actions < 1) throw std::invalid_argument("attacker needs at least one component");
  params_.add("logits", {static_cast<std::size_t>(num_states), static_cast<std::size_t>(num_actions), 3});
}

std::vector<double> MdpAttacker::probabilities(int state, int action) const {
  return softmax3(&params_.at("logits").value[(state * num_actions_ + action) * 3]);
}

std::vector<double> MdpAttacker::mean_shift() const {
  std::vector<double> out(num_components());
  for (int s = 0; s < num_states_; ++s) {
    for (int a = 0; a < num_actions_; ++a) {
      const auto p = probabilities(s, a);
      out[s * num_actions_ + a] = p[2] - p[0];
    }
  }
  return out;
}

void MdpAttacker::set_logits(int state, int action, const std::vector<double>& logits) {
  if (logits.size() != 3) throw std::invalid_argument("MDP attacker logits have 3 entries");
  auto& v = params_.at("logits").value;
  std::copy(logits.begin(), logits.end(), v.begin() + (state * num_actions_ + action) * 3);
}

double MdpAttacker::sample_perturbation(int state, int action, double, Rng& rng) {
  const auto p = probabilities(state, action);
  return static_cast<double>(rng.categorical(p)) - 1.0;
}

// ---------------------------------------------------------------------------

int AttackerTokenLayout::width() const {
  switch (base.kind) {
    case EnvKind::kBandit:
      return base.num_actions + 1;
    case EnvKind::kLinear:
      return static_cast<int>(base.features.front().size()) + 1;
    case EnvKind::kDarkroom2:
      return base.num_states + base.num_actions + 1;
  }
  return 0;
}

Vec AttackerTokenLayout::encode(int state, int action, double clean_reward) const {
  Vec v = Vec::Zero(width());
  switch (base.kind) {
    case EnvKind::kBandit:
      v[action] = 1.0;
      v[base.num_actions] = clean_reward;
      break;
    case EnvKind::kLinear: {
      const auto& psi = base.features.at(action);
      for (std::size_t i = 0; i < psi.size(); ++i) v[i] = psi[i];
      v[psi.size()] = clean_reward;
      break;
    }
    case EnvKind::kDarkroom2:
      v[state] = 1.0;
      v[base.num_states + action] = 1.0;
      v[base.num_states + base.num_actions] = clean_reward;
      break;
  }
  return v;
}

AdaptiveAttacker::AdaptiveAttacker(const AttackerTokenLayout& layout, TransformerConfig cfg, Rng& init_rng)
    : layout_(layout) {
  cfg.input_width = layout.width();
  cfg.output_width = 2;
  model_ = Transformer(cfg, init_rng);
  decoder_ = std::make_unique<IncrementalDecoder>(model_);
}

AdaptiveAttacker::AdaptiveAttacker(const AttackerTokenLayout& layout, Transformer model)
    : layout_(layout), model_(std::move(model)) {
  if (model_.config().input_width != layout.width() || model_.config().output_width != 2) {
    throw std::invalid_argument("adaptive attacker model does not match the token layout");
  }
  decoder_ = std::make_unique<IncrementalDecoder>(model_);
}

AdaptiveAttacker::AdaptiveAttacker(const AdaptiveAttacker& other)
    : Attacker(other), layout_(other.layout_), model_(other.model_), decoder_(std::make_unique<IncrementalDecoder>(model_)) {}

void AdaptiveAttacker::begin_episode() {
  context_.clear();
  decoder_->reset();
  current_mean_ = 0.0;
  current_std_ = 1.0;
}

void AdaptiveAttacker::rebuild() {
  // Sliding window: drop the oldest token and replay the rest.
  context_.erase(context_.begin());
  decoder_->reset();
  for (std::size_t i = 0; i + 1 < context_.size(); ++i) decoder_->push(context_[i]);
}

void AdaptiveAttacker::observe(int state, int action, double clean_reward) {
  context_.push_back(layout_.encode(state, action, clean_reward));
  if (static_cast<int>(context_.size()) > model_.config().context_capacity) rebuild();
  const Vec out = decoder_->push(context_.back());
  current_mean_ = out[0];
  current_std_ = std_from_raw(out[1]);
}

double AdaptiveAttacker::sample_perturbation(int, int, double, Rng& rng) {
  return current_mean_ + current_std_ * rng.normal();
}

Mat AdaptiveAttacker::encode_trace(const EpisodeTrace& trace) const {
  Mat m(static_cast<Eigen::Index>(trace.steps.size()), layout_.width());
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& t = trace.steps[i].transition;
    m.row(i) = layout_.encode(t.state, t.action, t.clean_reward).transpose();
  }
  return m;
}

void project_to_ball(std::vector<double>& v, double radius) {
  const double norm = l2_norm(v);
  if (norm > radius) {
    for (double& x : v) x *= radius / norm;
  }
}

std::vector<double> uniform_random_attack(int num_components, double budget, Rng& rng) {
  if (!(budget > 0.0)) throw std::invalid_argument("uniform_random_attack: budget must be positive");
  std::vector<double> phi(static_cast<std::size_t>(num_components));
  for (double& v : phi) v = rng.uniform(-budget, budget);
  project_to_ball(phi, budget);
  return phi;
}

// ---------------------------------------------------------------------------

double attacker_objective(const std::vector<double>& clean_returns, const std::vector<double>& mean_shift,
                          const std::vector<double>& stds, const AttackConfig& cfg) {
  if (clean_returns.empty()) throw std::invalid_argument("attacker_objective: no episodes");
  double total = 0.0;
  for (double r : clean_returns) total -= r;
  const double value = total / static_cast<double>(clean_returns.size());
  return value - cfg.lambda * hinge(l2_norm(mean_shift), cfg.budget) - cfg.lambda * hinge(l2_norm(stds), cfg.sigma_budget);
}

double attacker_objective(const std::vector<double>& clean_returns, const BanditAttacker& attacker,
                          const AttackConfig& cfg) {
  return attacker_objective(clean_returns, attacker.mean_shift(), attacker.stds(), cfg);
}

double attacker_objective(const std::vector<double>& clean_returns, const MdpAttacker& attacker,
                          const AttackConfig& cfg) {
  return attacker_objective(clean_returns, attacker.mean_shift(), {}, cfg);
}

std::vector<double> attacker_returns(const EpisodeTrace& trace) {
  std::vector<double> out(trace.steps.size());
  if (!trace.reward_to_go) {
    std::fill(out.begin(), out.end(), -trace.clean_return);
    return out;
  }
  double after = 0.0;
  for (std::size_t i = trace.steps.size(); i-- > 0;) {
    out[i] = after;
    after -= trace.steps[i].transition.clean_reward;
  }
  return out;
}

std::vector<double> ReinforceBaseline::advance(const EpisodeTrace& trace) {
  const auto returns = attacker_returns(trace);
  if (!initialized || values.size() != returns.size()) {
    values = returns;
    initialized = true;
    return std::vector<double>(returns.size(), 0.0);
  }
  std::vector<double> adv(returns.size());
  for (std::size_t i = 0; i < returns.size(); ++i) {
    adv[i] = returns[i] - values[i];
    values[i] = decay * values[i] + (1.0 - decay) * returns[i];
  }
  return adv;
}

void penalty_gradient(const BanditAttacker& attacker, const AttackConfig& cfg, std::vector<double>& d_mean,
                      std::vector<double>& d_log_std) {
  const auto mean = attacker.mean_shift();
  const auto sd = attacker.stds();
  d_mean.assign(mean.size(), 0.0);
  d_log_std.assign(sd.size(), 0.0);
  const double mn = l2_norm(mean);
  if (mn > cfg.budget) {
    for (std::size_t i = 0; i < mean.size(); ++i) d_mean[i] = -cfg.lambda * mean[i] / mn;
  }
  const double sn = l2_norm(sd);
  if (sn > cfg.sigma_budget) {
    for (std::size_t i = 0; i < sd.size(); ++i) d_log_std[i] = -cfg.lambda * sd[i] * sd[i] / sn;
  }
}

namespace {

// Weight of one poisoned step in the score-function term.
double score_scale(const std::vector<EpisodeTrace>& traces, int poisoned_steps, const AttackConfig& cfg) {
  return cfg.score_mean_over_steps ? 1.0 / static_cast<double>(poisoned_steps)
                                   : 1.0 / static_cast<double>(traces.size());
}

}  // namespace

UpdateReport reinforce_update(BanditAttacker& attacker, const std::vector<EpisodeTrace>& traces,
                              const std::vector<std::vector<double>>& advantages, const AttackConfig& cfg,
                              double learning_rate, int iterations) {
  check_advantages(traces, advantages);
  UpdateReport report;
  report.poisoned_steps = count_poisoned(traces);
  if (report.poisoned_steps == 0) return report;
  const double scale = score_scale(traces, report.poisoned_steps, cfg);
  for (int it = 0; it < iterations; ++it) {
    const auto mean = attacker.mean_shift();
    const auto& log_sd = attacker.params().at("log_std").value;
    std::vector<double> d_mean, d_log_std;
    penalty_gradient(attacker, cfg, d_mean, d_log_std);
    for (std::size_t k = 0; k < traces.size(); ++k) {
      const auto& steps = traces[k].steps;
      for (std::size_t h = 0; h < steps.size(); ++h) {
        if (!steps[h].poisoned) continue;
        const int i = attacker.component(steps[h].transition.state, steps[h].transition.action);
        const double sd = std::exp(log_sd[i]);
        const double z = (steps[h].perturbation - mean[i]) / sd;
        const double a = advantages[k][h] * scale;
        d_mean[i] += a * z / sd;
        d_log_std[i] += a * (z * z - 1.0);
      }
    }
    store_ascent(attacker.params().at("mean_shift"), d_mean);
    store_ascent(attacker.params().at("log_std"), d_log_std);
    if (optimizer_step(attacker.params(), learning_rate)) report.applied = true;
    for (double& v : attacker.params().at("log_std").value) v = std::max(v, kMinLogStd);
  }
  return report;
}

UpdateReport reinforce_update(MdpAttacker& attacker, const std::vector<EpisodeTrace>& traces,
                              const std::vector<std::vector<double>>& advantages, const AttackConfig& cfg,
                              double learning_rate, int iterations) {
  check_advantages(traces, advantages);
  UpdateReport report;
  report.poisoned_steps = count_poisoned(traces);
  if (report.poisoned_steps == 0) return report;
  const double scale = score_scale(traces, report.poisoned_steps, cfg);
  const int na = static_cast<int>(attacker.params().at("logits").shape[1]);
  for (int it = 0; it < iterations; ++it) {
    Tensor& logits = attacker.params().at("logits");
    std::vector<double> ascent(logits.size(), 0.0);
    for (std::size_t k = 0; k < traces.size(); ++k) {
      const auto& steps = traces[k].steps;
      for (std::size_t h = 0; h < steps.size(); ++h) {
        if (!steps[h].poisoned) continue;
        const auto& t = steps[h].transition;
        const auto p = attacker.probabilities(t.state, t.action);
        const int chosen = static_cast<int>(std::lround(steps[h].perturbation)) + 1;
        const double a = advantages[k][h] * scale;
        const std::size_t base = static_cast<std::size_t>((t.state * na + t.action) * 3);
        for (int j = 0; j < 3; ++j) ascent[base + j] += a * ((j == chosen ? 1.0 : 0.0) - p[j]);
      }
    }
    const auto mean = attacker.mean_shift();
    const double mn = l2_norm(mean);
    if (mn > cfg.budget) {
      for (std::size_t i = 0; i < mean.size(); ++i) {
        const double d_mu = -cfg.lambda * mean[i] / mn;
        const auto p = softmax3(&logits.value[i * 3]);
        for (int j = 0; j < 3; ++j) ascent[i * 3 + j] += d_mu * p[j] * ((j - 1) - mean[i]);
      }
    }
    store_ascent(logits, ascent);
    if (optimizer_step(attacker.params(), learning_rate)) report.applied = true;
  }
  return report;
}

UpdateReport reinforce_update(AdaptiveAttacker& attacker, const std::vector<EpisodeTrace>& traces,
                              const std::vector<std::vector<double>>& advantages, const AttackConfig& cfg,
                              double learning_rate, int iterations) {
  check_advantages(traces, advantages);
  UpdateReport report;
  report.poisoned_steps = count_poisoned(traces);
  if (report.poisoned_steps == 0) return report;
  const double inv_traces = 1.0 / static_cast<double>(traces.size());
  const double scale = score_scale(traces, report.poisoned_steps, cfg);
  const int na = attacker.layout().base.num_actions;
  const int ncomp = attacker.layout().base.num_states * na;
  Transformer& model = attacker.model();

  // Context resets at every episode start, so each episode is one sequence.
  struct Segment {
    std::size_t trace;
    std::size_t begin;
    std::size_t length;
  };
  std::vector<Segment> segments;
  std::vector<Mat> encoded(traces.size());
  for (std::size_t k = 0; k < traces.size(); ++k) {
    encoded[k] = attacker.encode_trace(traces[k]);
    const auto& steps = traces[k].steps;
    std::size_t begin = 0;
    for (std::size_t h = 1; h <= steps.size(); ++h) {
      if (h == steps.size() || steps[h].transition.step == 0) {
        segments.push_back({k, begin, h - begin});
        begin = h;
      }
    }
  }

  ForwardCache cache;
  for (int it = 0; it < iterations; ++it) {
    model.params().zero_grad();
    // Forward every segment first: the penalty couples all steps of a trace.
    std::vector<Mat> outputs(segments.size());
    for (std::size_t c0 = 0; c0 < segments.size(); c0 += kAdaptiveChunk) {
      const std::size_t c1 = std::min(segments.size(), c0 + kAdaptiveChunk);
      std::vector<Mat> batch;
      for (std::size_t c = c0; c < c1; ++c) {
        batch.push_back(encoded[segments[c].trace].middleRows(segments[c].begin, segments[c].length));
      }
      auto out = model.forward(batch, cache);
      for (std::size_t c = c0; c < c1; ++c) outputs[c] = std::move(out[c - c0]);
    }
    // Ascent gradients with respect to (mean, raw log-std) per position.
    std::vector<Mat> grads(segments.size());
    for (std::size_t c = 0; c < segments.size(); ++c) grads[c] = Mat::Zero(outputs[c].rows(), 2);
    for (std::size_t k = 0; k < traces.size(); ++k) {
      const auto& steps = traces[k].steps;
      std::vector<double> mean_sum(ncomp, 0.0), std_sum(ncomp, 0.0);
      std::vector<int> count(ncomp, 0);
      for (std::size_t c = 0; c < segments.size(); ++c) {
        if (segments[c].trace != k) continue;
        for (std::size_t r = 0; r < segments[c].length; ++r) {
          const auto& s = steps[segments[c].begin + r];
          if (!s.poisoned) continue;
          const double mu = outputs[c](r, 0);
          const double sd = AdaptiveAttacker::std_from_raw(outputs[c](r, 1));
          const double z = (s.perturbation - mu) / sd;
          const double a = advantages[k][segments[c].begin + r] * scale;
          grads[c](r, 0) += a * z / sd;
          grads[c](r, 1) += a * (z * z - 1.0) / sd * (sd - kAdaptiveStdFloor);
          const int comp = s.transition.state * na + s.transition.action;
          mean_sum[comp] += mu;
          std_sum[comp] += sd;
          ++count[comp];
        }
      }
      std::vector<double> mean_bar(ncomp, 0.0), std_bar(ncomp, 0.0);
      for (int i = 0; i < ncomp; ++i) {
        if (count[i] == 0) continue;
        mean_bar[i] = mean_sum[i] / count[i];
        std_bar[i] = std_sum[i] / count[i];
      }
      const double mn = l2_norm(mean_bar);
      const double sn = l2_norm(std_bar);
      const bool mean_active = mn > cfg.budget;
      const bool std_active = sn > cfg.sigma_budget;
      if (!mean_active && !std_active) continue;
      for (std::size_t c = 0; c < segments.size(); ++c) {
        if (segments[c].trace != k) continue;
        for (std::size_t r = 0; r < segments[c].length; ++r) {
          const auto& s = steps[segments[c].begin + r];
          if (!s.poisoned) continue;
          const int comp = s.transition.state * na + s.transition.action;
          if (mean_active) grads[c](r, 0) -= inv_traces * cfg.lambda * (mean_bar[comp] / mn) / count[comp];
          if (std_active) {
            const double sd = AdaptiveAttacker::std_from_raw(outputs[c](r, 1));
            grads[c](r, 1) -= inv_traces * cfg.lambda * (std_bar[comp] / sn) / count[comp] * (sd - kAdaptiveStdFloor);
          }
        }
      }
    }
    for (std::size_t c0 = 0; c0 < segments.size(); c0 += kAdaptiveChunk) {
      const std::size_t c1 = std::min(segments.size(), c0 + kAdaptiveChunk);
      std::vector<Mat> batch, g;
      for (std::size_t c = c0; c < c1; ++c) {
        batch.push_back(encoded[segments[c].trace].middleRows(segments[c].begin, segments[c].length));
        g.push_back(-grads[c]);
      }
      model.forward(batch, cache);
      model.backward(cache, g);
    }
    if (optimizer_step(model.params(), learning_rate)) report.applied = true;
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

void play_episode(Agent& victim, const Task& task, Attacker* attacker, double epsilon, RolloutStreams& streams,
                  EpisodeTrace& trace, bool scored) {
  int state = start_state(task);
  victim.begin_episode(state);
  if (attacker) attacker->begin_episode();
  if (scored) {
    trace.actions.clear();
    trace.clean_return = 0.0;
  }
  const int horizon = horizon_of(task);
  for (int h = 0; h < horizon; ++h) {
    const int action = victim.act(state, h, streams.victim);
    const StepResult r = step(task, state, action, streams.environment);
    StepRecord rec;
    rec.transition = {state, action, r.reward, r.reward, r.next_state, h};
    if (attacker) {
      attacker->observe(state, action, r.reward);
      const double delta = attacker->sample_perturbation(state, action, r.reward, streams.attack);
      const Contamination c = contaminate(r.reward, r.reward + delta, epsilon, streams.coin);
      rec.poisoned = c.poisoned;
      rec.transition.observed_reward = c.observed;
      rec.perturbation = c.poisoned ? delta : 0.0;
    }
    victim.observe({state, action, rec.transition.observed_reward, r.next_state});
    if (scored) {
      trace.actions.push_back(action);
      trace.clean_return += r.reward;
    }
    trace.steps.push_back(rec);
    state = r.next_state;
  }
  victim.end_episode();
}

}  // namespace

EpisodeTrace run_episode(Agent& victim, const Task& task, Attacker* attacker, double epsilon,
                         RolloutStreams& streams) {
  EpisodeTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(horizon_of(task)));
  play_episode(victim, task, attacker, epsilon, streams, trace, true);
  return trace;
}

EpisodeTrace run_multi_episode(Agent& victim, const Task& task, Attacker* attacker, double epsilon,
                               RolloutStreams& streams, int warmup) {
  EpisodeTrace trace;
  trace.reward_to_go = false;
  for (int e = 0; e < warmup; ++e) play_episode(victim, task, attacker, epsilon, streams, trace, false);
  play_episode(victim, task, attacker, epsilon, streams, trace, true);
  return trace;
}

}  // namespace ricl
