#include "ricl/victims.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ricl {

namespace {

/// Lowest index among the maxima; +inf scores win in index order.
int argmax_lowest(std::span<const double> scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

/// Plays arms with zero pulls first, lowest index first.
std::optional<int> first_unplayed(const ArmStatistics& stats) {
  for (int a = 0; a < stats.num_arms(); ++a) {
    if (stats.counts[a] == 0) return a;
  }
  return std::nullopt;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

TrimmedMean trimmed_mean(std::span<const double> values, double alpha) {
  if (!(alpha >= 0.0 && alpha < 0.5)) throw std::invalid_argument("trimmed_mean: alpha must be in [0, 0.5)");
  const std::size_t n = values.size();
  if (n == 0) return {0.0, true};
  const auto cut = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n)));
  if (2 * cut >= n) return {0.0, true};
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double sum = std::accumulate(sorted.begin() + cut, sorted.end() - cut, 0.0);
  return {sum / static_cast<double>(n - 2 * cut), false};
}

void ArmStatistics::record(int arm, double reward) {
  counts[arm] += 1;
  rewards[arm].push_back(reward);
  sums[arm] += reward;
}

int ArmStatistics::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

double crucb_bonus(int pulls, double step, const CrUcbConfig& cfg) {
  if (!(step >= 1.0)) throw std::invalid_argument("crucb_bonus: step must be >= 1");
  const double keep = 1.0 - 2.0 * cfg.alpha;
  if (!(keep > 0.0)) throw std::invalid_argument("crucb: 1 - 2*alpha must be positive");
  const double log_h = std::log(step);
  switch (cfg.variant) {
    case CrUcbVariant::kOriginal:
    case CrUcbVariant::kLowSigma0: {
      if (pulls <= 0) return kInf;
      const double sigma0 = cfg.variant == CrUcbVariant::kLowSigma0 ? cfg.sigma0 * std::sqrt(keep) : cfg.sigma0;
      return sigma0 / keep * std::sqrt(4.0 * log_h / pulls);
    }
    case CrUcbVariant::kModified: {
      const double effective = std::floor(keep * pulls);
      if (effective <= 0.0) return kInf;
      return cfg.sigma0 * std::sqrt(4.0 * log_h / effective);
    }
  }
  return kInf;
}

std::vector<double> crucb_scores(const ArmStatistics& stats, int step, const CrUcbConfig& cfg) {
  std::vector<double> scores(stats.num_arms());
  for (int a = 0; a < stats.num_arms(); ++a) {
    const double bonus = crucb_bonus(stats.counts[a], step, cfg);
    if (std::isinf(bonus)) {
      scores[a] = kInf;
      continue;
    }
    // The modified variant keeps pulling an arm until its trimmed mean is
    // defined; the other variants score a degenerate estimate as 0.
    const auto estimate = trimmed_mean(stats.rewards[a], cfg.alpha);
    scores[a] = estimate.degenerate && cfg.variant == CrUcbVariant::kModified ? kInf : estimate.value + bonus;
  }
  return scores;
}

double rts_bound(RtsRegime regime, int horizon, int num_arms,
                 std::optional<std::span<const double>> observed_corruptions) {
  if (horizon < 1) throw std::invalid_argument("rts_bound: horizon must be >= 1");
  switch (regime) {
    case RtsRegime::kKnown: {
      if (!observed_corruptions) throw std::invalid_argument("rts_bound: known regime needs a corruption trace");
      double total = 0.0;
      for (double c : *observed_corruptions) total += std::abs(c);
      return total;
    }
    case RtsRegime::kUnknown:
      return std::sqrt(horizon * std::log(static_cast<double>(num_arms)) / num_arms);
    case RtsRegime::kTuned:
      return 0.5;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

ThompsonSampling::ThompsonSampling(int num_arms, Params params) : stats_(num_arms), params_(params) {}

int ThompsonSampling::act(int, int, Rng& rng) {
  if (auto arm = first_unplayed(stats_)) return *arm;
  std::vector<double> samples(stats_.num_arms());
  for (int a = 0; a < stats_.num_arms(); ++a) {
    const double precision = 1.0 / params_.prior_var + stats_.counts[a] / params_.obs_var;
    const double var = 1.0 / precision;
    const double mean = var * (params_.prior_mean / params_.prior_var + stats_.sums[a] / params_.obs_var);
    samples[a] = rng.normal(mean + mean_bonus(a), std::sqrt(var));
  }
  return argmax_lowest(samples);
}

void ThompsonSampling::observe(const VictimTransition& t) { stats_.record(t.action, t.reward); }

RobustThompsonSampling::RobustThompsonSampling(int num_arms, double corruption_bound, Params params)
    : ThompsonSampling(num_arms, params), corruption_bound_(corruption_bound) {
  if (corruption_bound < 0.0) throw std::invalid_argument("RTS corruption bound must be >= 0");
}

double RobustThompsonSampling::mean_bonus(int arm) const {
  return stats_.counts[arm] > 0 ? corruption_bound_ / stats_.counts[arm] : 0.0;
}

Ucb1::Ucb1(int num_arms, double scale) : stats_(num_arms), scale_(scale) {}

int Ucb1::act(int, int, Rng&) {
  if (auto arm = first_unplayed(stats_)) return *arm;
  const double log_h = std::log(static_cast<double>(stats_.total() + 1));
  std::vector<double> scores(stats_.num_arms());
  for (int a = 0; a < stats_.num_arms(); ++a) {
    scores[a] = stats_.mean(a) + scale_ * std::sqrt(2.0 * log_h / stats_.counts[a]);
  }
  return argmax_lowest(scores);
}

void Ucb1::observe(const VictimTransition& t) { stats_.record(t.action, t.reward); }

CrUcb::CrUcb(int num_arms, CrUcbConfig cfg) : stats_(num_arms), cfg_(cfg) {
  if (!(1.0 - 2.0 * cfg.alpha > 0.0) || cfg.alpha < 0.0) throw std::invalid_argument("crUCB alpha must be in [0, 0.5)");
  if (!(cfg.sigma0 > 0.0)) throw std::invalid_argument("crUCB sigma0 must be positive");
}

int CrUcb::act(int, int, Rng&) {
  if (auto arm = first_unplayed(stats_)) return *arm;
  const auto scores = crucb_scores(stats_, stats_.total() + 1, cfg_);
  return argmax_lowest(scores);
}

void CrUcb::observe(const VictimTransition& t) { stats_.record(t.action, t.reward); }

// ---------------------------------------------------------------------------

LinUcb::LinUcb(FeatureMatrix features, double width, double ridge)
    : features_(std::move(features)),
      width_(width),
      dim_(features_.empty() ? 0 : static_cast<int>(features_.front().size())),
      gram_(static_cast<std::size_t>(dim_ * dim_), 0.0),
      target_(static_cast<std::size_t>(dim_), 0.0),
      counts_(features_.size(), 0) {
  if (dim_ < 1) throw std::invalid_argument("LinUCB needs at least one feature");
  if (!(ridge > 0.0)) throw std::invalid_argument("LinUCB ridge must be positive");
  for (int i = 0; i < dim_; ++i) gram_[i * dim_ + i] = ridge;
}

std::vector<double> LinUcb::estimate() const {
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gram(gram_.data(),
                                                                                                      dim_, dim_);
  const Eigen::Map<const Eigen::VectorXd> target(target_.data(), dim_);
  const Eigen::VectorXd theta = gram.llt().solve(target);
  return {theta.data(), theta.data() + dim_};
}

std::vector<double> LinUcb::indices() const {
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gram(gram_.data(),
                                                                                                      dim_, dim_);
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  const Eigen::Map<const Eigen::VectorXd> target(target_.data(), dim_);
  const Eigen::VectorXd theta = llt.solve(target);
  std::vector<double> out(features_.size());
  for (std::size_t a = 0; a < features_.size(); ++a) {
    const Eigen::Map<const Eigen::VectorXd> x(features_[a].data(), dim_);
    const double width = std::sqrt(std::max(0.0, x.dot(llt.solve(x))));
    out[a] = x.dot(theta) + width_ * width;
  }
  return out;
}

int LinUcb::act(int, int, Rng&) {
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    if (counts_[a] == 0) return static_cast<int>(a);
  }
  const auto idx = indices();
  return argmax_lowest(idx);
}

void LinUcb::observe(const VictimTransition& t) {
  const auto& x = features_[t.action];
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) gram_[i * dim_ + j] += x[i] * x[j];
    target_[i] += t.reward * x[i];
  }
  counts_[t.action] += 1;
}

double geometric_mean(double a, double b) { return std::sqrt(a * b); }

CrLinUcbConfig crlinucb_config(CrLinUcbVariant variant, double epsilon, double budget, int horizon) {
  const double v1 = epsilon * budget * horizon;
  const double v2 = v1 / horizon;
  CrLinUcbConfig cfg;
  cfg.variant = variant;
  switch (variant) {
    case CrLinUcbVariant::kV1:
      cfg.budget_bound = v1;
      break;
    case CrLinUcbVariant::kV2:
      cfg.budget_bound = v2;
      break;
    case CrLinUcbVariant::kV3:
      cfg.budget_bound = geometric_mean(v1, v2);
      break;
  }
  return cfg;
}

CrLinUcb::CrLinUcb(FeatureMatrix features, double width, CrLinUcbConfig cfg, double ridge)
    : LinUcb(std::move(features), width + cfg.budget_bound / std::sqrt(ridge), ridge), cfg_(cfg) {
  if (!(cfg.budget_bound > 0.0)) throw std::invalid_argument("CRLinUCB budget bound must be positive");
}

// ---------------------------------------------------------------------------

QLearning::QLearning(int num_states, int num_actions, QLearningConfig cfg)
    : num_states_(num_states),
      num_actions_(num_actions),
      cfg_(cfg),
      q_(static_cast<std::size_t>(num_states * num_actions), 0.0) {}

double QLearning::exploration_rate() const {
  if (cfg_.decay_episodes <= 0) return cfg_.epsilon_end;
  const double frac = std::min(1.0, static_cast<double>(episodes_) / cfg_.decay_episodes);
  return cfg_.epsilon_start + (cfg_.epsilon_end - cfg_.epsilon_start) * frac;
}

int QLearning::greedy_action(int state) const {
  const double* row = &q_[state * num_actions_];
  return argmax_lowest(std::span<const double>(row, num_actions_));
}

void QLearning::begin_episode(int) {}

int QLearning::act(int state, int, Rng& rng) {
  const double explore = greedy_ ? 0.0 : exploration_rate();
  if (rng.uniform() < explore) return static_cast<int>(rng.index(num_actions_));
  // Random tie-break among maxima so an all-zero table still explores.
  const double* row = &q_[state * num_actions_];
  const double top = *std::max_element(row, row + num_actions_);
  std::vector<int> best;
  for (int a = 0; a < num_actions_; ++a) {
    if (row[a] == top) best.push_back(a);
  }
  return best[rng.index(best.size())];
}

void QLearning::observe(const VictimTransition& t) {
  const double* next = &q_[t.next_state * num_actions_];
  const double target = t.reward + cfg_.discount * *std::max_element(next, next + num_actions_);
  double& q = q_[t.state * num_actions_ + t.action];
  q += cfg_.learning_rate * (target - q);
}

void QLearning::end_episode() { ++episodes_; }

NaturalPolicyGradient::NaturalPolicyGradient(int num_states, int num_actions, NpgConfig cfg)
    : num_states_(num_states),
      num_actions_(num_actions),
      cfg_(cfg),
      theta_(static_cast<std::size_t>(num_states * num_actions), 0.0),
      q_(static_cast<std::size_t>(num_states * num_actions), 0.0) {}

std::vector<double> NaturalPolicyGradient::probabilities(int state) const {
  return softmax(std::span<const double>(&theta_[state * num_actions_], num_actions_));
}

void NaturalPolicyGradient::begin_episode(int) { episode_.clear(); }

int NaturalPolicyGradient::act(int state, int, Rng& rng) {
  const auto p = probabilities(state);
  return static_cast<int>(rng.categorical(p));
}

void NaturalPolicyGradient::observe(const VictimTransition& t) { episode_.push_back(t); }

void NaturalPolicyGradient::end_episode() {
  if (episode_.empty()) return;
  // Every-visit Monte-Carlo estimate of Q, then the closed-form NPG step for
  // a tabular softmax policy on each visited state.
  double ret = 0.0;
  std::vector<char> visited(num_states_, 0);
  for (std::size_t i = episode_.size(); i-- > 0;) {
    const auto& t = episode_[i];
    ret = t.reward + cfg_.discount * ret;
    double& q = q_[t.state * num_actions_ + t.action];
    q += cfg_.value_rate * (ret - q);
    visited[t.state] = 1;
  }
  for (int s = 0; s < num_states_; ++s) {
    if (!visited[s]) continue;
    const auto p = probabilities(s);
    double value = 0.0;
    for (int a = 0; a < num_actions_; ++a) value += p[a] * q_[s * num_actions_ + a];
    for (int a = 0; a < num_actions_; ++a) theta_[s * num_actions_ + a] += cfg_.step_size * (q_[s * num_actions_ + a] - value);
  }
  episode_.clear();
}

namespace {

EpisodeSummary run_clean_episode(Agent& agent, const Task& task, Rng& rng) {
  EpisodeSummary out;
  int state = start_state(task);
  agent.begin_episode(state);
  for (int h = 0; h < horizon_of(task); ++h) {
    const int action = agent.act(state, h, rng);
    const StepResult r = step(task, state, action, rng);
    agent.observe({state, action, r.reward, r.next_state});
    out.actions.push_back(action);
    out.clean_return += r.reward;
    state = r.next_state;
  }
  agent.end_episode();
  return out;
}

}  // namespace

EpisodeSummary q_learning_episode(QLearning& agent, const Task& task, Rng& rng) {
  return run_clean_episode(agent, task, rng);
}

EpisodeSummary npg_episode(NaturalPolicyGradient& agent, const Task& task, Rng& rng) {
  return run_clean_episode(agent, task, rng);
}

std::vector<int> value_iteration_policy(const Task& task, double discount, int iterations) {
  const int ns = num_states(task);
  const int na = num_actions(task);
  // Deterministic tasks only: successor of (s, a) is queried with a throwaway stream.
  std::vector<int> next(ns * na);
  std::vector<double> reward(ns * na);
  Rng probe(0);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      next[s * na + a] = step(task, s, a, probe).next_state;
      reward[s * na + a] = mean_reward(task, s, a);
    }
  }
  std::vector<double> v(ns, 0.0);
  std::vector<double> q(ns * na, 0.0);
  for (int it = 0; it < iterations; ++it) {
    for (int s = 0; s < ns; ++s) {
      for (int a = 0; a < na; ++a) q[s * na + a] = reward[s * na + a] + discount * v[next[s * na + a]];
    }
    for (int s = 0; s < ns; ++s) v[s] = *std::max_element(&q[s * na], &q[s * na] + na);
  }
  std::vector<int> policy(ns);
  for (int s = 0; s < ns; ++s) policy[s] = argmax_lowest(std::span<const double>(&q[s * na], na));
  return policy;
}

// ---------------------------------------------------------------------------

namespace {

struct VictimName {
  VictimId id;
  std::string_view name;
};

constexpr VictimName kVictimNames[] = {
    {VictimId::kAtDpt, "AT-DPT"},
    {VictimId::kDptFrozen, "DPT-frozen"},
    {VictimId::kTs, "TS"},
    {VictimId::kRtsTuned, "RTS-tuned"},
    {VictimId::kRtsUnknown, "RTS-unknown"},
    {VictimId::kRtsKnown, "RTS-known"},
    {VictimId::kUcb, "UCB"},
    {VictimId::kCrUcbOriginal, "crUCB-orig"},
    {VictimId::kCrUcbLowSigma0, "crUCB-lowsigma0"},
    {VictimId::kCrUcbModified, "crUCB-mod"},
    {VictimId::kLinUcb, "LinUCB"},
    {VictimId::kCrLinUcbV1, "CRLinUCB-v1"},
    {VictimId::kCrLinUcbV2, "CRLinUCB-v2"},
    {VictimId::kCrLinUcbV3, "CRLinUCB-v3"},
    {VictimId::kNpg, "NPG"},
    {VictimId::kQLearning, "Q-learning"},
};

}  // namespace

std::string_view to_string(VictimId id) {
  for (const auto& entry : kVictimNames) {
    if (entry.id == id) return entry.name;
  }
  return "unknown";
}

VictimId parse_victim_id(std::string_view text) {
  for (const auto& entry : kVictimNames) {
    if (entry.name == text) return entry.id;
  }
  if (text == "RTS") return VictimId::kRtsTuned;
  if (text == "crUCB") return VictimId::kCrUcbModified;
  if (text == "CRLinUCB") return VictimId::kCrLinUcbV2;
  if (text == "DPT" || text == "DPT-frozen") return VictimId::kDptFrozen;
  if (text == "UCB1.0") return VictimId::kUcb;
  throw std::invalid_argument("unknown victim id '" + std::string(text) + "'");
}

bool is_transformer_victim(VictimId id) { return id == VictimId::kAtDpt || id == VictimId::kDptFrozen; }

bool is_multi_episode_victim(VictimId id) { return id == VictimId::kNpg || id == VictimId::kQLearning; }

bool supports_env(VictimId id, EnvKind env) {
  switch (id) {
    case VictimId::kAtDpt:
    case VictimId::kDptFrozen:
      return true;
    case VictimId::kLinUcb:
    case VictimId::kCrLinUcbV1:
    case VictimId::kCrLinUcbV2:
    case VictimId::kCrLinUcbV3:
      return env == EnvKind::kLinear;
    case VictimId::kNpg:
    case VictimId::kQLearning:
      return env == EnvKind::kDarkroom2;
    default:
      return env == EnvKind::kBandit;
  }
}

std::unique_ptr<Agent> make_classical_victim(VictimId id, const Task& task, const VictimSettings& settings) {
  if (!supports_env(id, kind_of(task)) || is_transformer_victim(id)) {
    throw std::invalid_argument("victim " + std::string(to_string(id)) + " cannot run on " +
                                std::string(to_string(kind_of(task))));
  }
  const int arms = num_actions(task);
  const int horizon = horizon_of(task);
  switch (id) {
    case VictimId::kTs:
      return std::make_unique<ThompsonSampling>(arms, settings.ts);
    case VictimId::kRtsTuned:
      return std::make_unique<RobustThompsonSampling>(arms, settings.rts_tuned_bound, settings.ts);
    case VictimId::kRtsUnknown:
      return std::make_unique<RobustThompsonSampling>(arms, rts_bound(RtsRegime::kUnknown, horizon, arms),
                                                      settings.ts);
    case VictimId::kRtsKnown:
      if (!settings.rts_known_bound) throw std::invalid_argument("RTS-known needs a corruption bound");
      return std::make_unique<RobustThompsonSampling>(arms, *settings.rts_known_bound, settings.ts);
    case VictimId::kUcb:
      return std::make_unique<Ucb1>(arms, settings.ucb_scale);
    case VictimId::kCrUcbOriginal:
      return std::make_unique<CrUcb>(arms, CrUcbConfig{settings.epsilon, settings.crucb_sigma0, CrUcbVariant::kOriginal});
    case VictimId::kCrUcbLowSigma0:
      return std::make_unique<CrUcb>(arms, CrUcbConfig{settings.epsilon, settings.crucb_sigma0, CrUcbVariant::kLowSigma0});
    case VictimId::kCrUcbModified:
      return std::make_unique<CrUcb>(arms, CrUcbConfig{settings.epsilon, settings.crucb_sigma0, CrUcbVariant::kModified});
    case VictimId::kLinUcb:
      return std::make_unique<LinUcb>(std::get<LinearBanditTask>(task).features, settings.linucb_width);
    case VictimId::kCrLinUcbV1:
    case VictimId::kCrLinUcbV2:
    case VictimId::kCrLinUcbV3: {
      const auto variant = id == VictimId::kCrLinUcbV1   ? CrLinUcbVariant::kV1
                           : id == VictimId::kCrLinUcbV2 ? CrLinUcbVariant::kV2
                                                         : CrLinUcbVariant::kV3;
      return std::make_unique<CrLinUcb>(std::get<LinearBanditTask>(task).features, settings.linucb_width,
                                        crlinucb_config(variant, settings.epsilon, settings.budget, horizon));
    }
    case VictimId::kNpg:
      return std::make_unique<NaturalPolicyGradient>(num_states(task), arms, settings.npg);
    case VictimId::kQLearning:
      return std::make_unique<QLearning>(num_states(task), arms, settings.q_learning);
    default:
      break;
  }
  throw std::invalid_argument("not a classical victim");
}

}  // namespace ricl
