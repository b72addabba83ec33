#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ricl/envs.hpp"
#include "ricl/rng.hpp"
#include "ricl/victims.hpp"

namespace ricl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct TransformerConfig {
  int num_layers = 4;
  int num_heads = 4;
  int embed_dim = 32;
  /// Maximum number of context tokens after the query token.
  int context_capacity = 200;
  double dropout = 0.0;
  int input_width = 6;
  int output_width = 5;
  bool learned_positions = true;
  double init_std = 0.02;

  int max_positions() const { return context_capacity + 1; }
  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> moment1;
  std::vector<double> moment2;

  std::size_t size() const { return value.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const;
};

/// Named tensors with gradient and optimizer buffers, in a fixed order.
class ModelParams {
 public:
  Tensor& add(std::string name, std::vector<std::size_t> shape);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t count() const;

  void zero_grad();
  bool all_finite() const;
  bool grads_finite() const;
  double grad_norm() const;
  void scale_grads(double factor);

  long optimizer_steps = 0;

 private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step on every tensor. Returns false (and leaves the
/// parameters untouched) when any gradient is non-finite.
bool optimizer_step(ModelParams& params, double learning_rate, const AdamConfig& cfg = {});

/// Intermediate values of one forward pass, kept for backward.
struct ForwardCache;

/// GPT-style decoder: learned input projection, learned positions,
/// pre-LayerNorm residual blocks with causal attention and a GELU MLP,
/// final LayerNorm and a linear head.
class Transformer {
 public:
  Transformer() = default;
  Transformer(const TransformerConfig& cfg, Rng& init_rng);

  const TransformerConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// One output row per token for each sequence. Sequences may differ in
  /// length; each must have at most max_positions() rows.
  std::vector<Mat> forward(const std::vector<Mat>& sequences) const;
  std::vector<Mat> forward(const std::vector<Mat>& sequences, ForwardCache& cache) const;
  /// Accumulates parameter gradients for d(loss)/d(outputs).
  void backward(const ForwardCache& cache, const std::vector<Mat>& output_grads);

 private:
  void bind();

  TransformerConfig cfg_;
  ModelParams params_;
  struct Layer {
    std::size_t ln1_gain, ln1_bias, qkv_w, qkv_b, proj_w, proj_b, ln2_gain, ln2_bias, fc_w, fc_b, out_w, out_b;
  };
  std::size_t embed_w_ = 0, embed_b_ = 0, pos_ = 0, lnf_gain_ = 0, lnf_bias_ = 0, head_w_ = 0, head_b_ = 0;
  std::vector<Layer> layers_;

  friend class IncrementalDecoder;
};

struct ForwardCache {
  struct LayerCache {
    Mat x_in, ln1_hat, ln1_out, qkv, attn_cat, x_mid, ln2_hat, ln2_out, fc_pre, fc_act;
    Vec ln1_rstd, ln2_rstd;
    std::vector<Mat> probs;  // transposed attention weights, [sequence * heads + head]
  };
  Mat input;
  std::vector<int> offsets;
  std::vector<int> lengths;
  std::vector<LayerCache> layers;
  Mat x_final, lnf_hat, lnf_out;
  Vec lnf_rstd;
};

/// Token-by-token evaluation with cached keys and values. Produces the same
/// rows as Transformer::forward on the growing sequence.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const Transformer& model);
  void reset();
  int length() const { return length_; }
  /// Appends one token and returns the output row at its position.
  Vec push(const Vec& token);

 private:
  const Transformer* model_;
  std::vector<Mat> keys_;
  std::vector<Mat> values_;
  int length_ = 0;
};

/// Mean negative log-softmax probability of `targets` over rows whose target
/// is >= 0. Fills `grad` with d(loss)/d(logits). Throws when no row is active.
double nll_loss(const Mat& logits, const std::vector<int>& targets, Mat* grad = nullptr);
std::vector<double> softmax_row(const Vec& logits);

// ---------------------------------------------------------------------------
// Token layouts

/// Fixed-width token encoding of transitions for one environment family.
/// bandit:    [one-hot action | reward]
/// darkroom2: [one-hot state | one-hot action | reward | one-hot next state]
/// linear:    [psi(action) | reward]
/// The query token carries the query state in the state slot (darkroom2) and
/// zeros everywhere else.
struct TokenLayout {
  EnvKind kind = EnvKind::kBandit;
  int num_states = 1;
  int num_actions = 5;
  FeatureMatrix features;

  static TokenLayout for_task(const Task& task);
  static TokenLayout for_distribution(const TaskDistribution& dist);
  int width() const;
  Vec encode(const VictimTransition& t) const;
  Vec encode_query(int query_state) const;
  VictimTransition decode(const Vec& token) const;
};

/// Query token followed by one token per context entry.
Mat encode_context(const TokenLayout& layout, const std::vector<VictimTransition>& context, int query_state);

}  // namespace ricl
