#include "ricl/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ricl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;
using MapW = Eigen::Map<const RowMat>;
using MapG = Eigen::Map<RowMat>;
using MapB = Eigen::Map<const RowVec>;
using MapBG = Eigen::Map<RowVec>;

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

MapW weight(const Tensor& t) { return MapW(t.value.data(), t.rows(), t.cols()); }
MapG weight_grad(Tensor& t) { return MapG(t.grad.data(), t.rows(), t.cols()); }
MapB bias(const Tensor& t) { return MapB(t.value.data(), t.size()); }
MapBG bias_grad(Tensor& t) { return MapBG(t.grad.data(), t.size()); }

void layer_norm(const Mat& x, const Tensor& gain, const Tensor& shift, Mat& hat, Vec& rstd, Mat& out) {
  const Vec mean = x.rowwise().mean();
  hat = x.colwise() - mean;
  rstd = (hat.array().square().rowwise().mean() + kLnEps).rsqrt();
  hat.array().colwise() *= rstd.array();
  out = (hat.array().rowwise() * bias(gain).array()).rowwise() + bias(shift).array();
}

Mat layer_norm_backward(const Mat& dy, const Mat& hat, const Vec& rstd, Tensor& gain, Tensor& shift) {
  bias_grad(gain) += (dy.array() * hat.array()).colwise().sum().matrix();
  bias_grad(shift) += dy.colwise().sum();
  const Mat dhat = dy.array().rowwise() * bias(gain).array();
  const Vec m1 = dhat.rowwise().mean();
  const Vec m2 = (dhat.array() * hat.array()).rowwise().mean();
  Mat dx = dhat;
  dx.colwise() -= m1;
  dx -= (hat.array().colwise() * m2.array()).matrix();
  dx.array().colwise() *= rstd.array();
  return dx;
}

RowVec layer_norm_row(const RowVec& x, const Tensor& gain, const Tensor& shift) {
  const double mean = x.mean();
  RowVec c = x.array() - mean;
  const double rstd = 1.0 / std::sqrt(c.array().square().mean() + kLnEps);
  c *= rstd;
  return (c.array() * bias(gain).array() + bias(shift).array()).matrix();
}

// Scores are stored transposed: column i holds query i against keys 0..n-1,
// so each softmax runs over a contiguous column prefix.
void causal_softmax_columns(Mat& st) {
  const Eigen::Index n = st.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    auto col = st.col(c).head(c + 1);
    const double mx = col.maxCoeff();
    col = (col.array() - mx).exp();
    col /= col.sum();
    st.col(c).tail(n - c - 1).setZero();
  }
}

// tanh through exp: Eigen vectorizes exp but not tanh for doubles.
Eigen::ArrayXXd fast_tanh(const Eigen::ArrayXXd& u) { return 1.0 - 2.0 / ((2.0 * u).exp() + 1.0); }

Mat gelu(const Mat& x) {
  const auto a = x.array();
  return (0.5 * a * (1.0 + fast_tanh(kGeluC * (a + kGeluA * a.cube())))).matrix();
}

Mat gelu_grad(const Mat& x) {
  const auto a = x.array();
  const Eigen::ArrayXXd t = fast_tanh(kGeluC * (a + kGeluA * a.cube()));
  return (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t.square()) * kGeluC * (1.0 + 3.0 * kGeluA * a.square())).matrix();
}

std::string layer_name(int l, const char* suffix) { return "blocks." + std::to_string(l) + "." + suffix; }

}  // namespace

void TransformerConfig::validate() const {
  if (num_layers < 1 || num_heads < 1 || embed_dim < 1) throw std::invalid_argument("transformer sizes must be positive");
  if (embed_dim % num_heads != 0) throw std::invalid_argument("embed_dim must be divisible by num_heads");
  if (context_capacity < 1) throw std::invalid_argument("context_capacity must be >= 1");
  if (input_width < 1 || output_width < 1) throw std::invalid_argument("input/output width must be positive");
  if (dropout != 0.0) throw std::invalid_argument("dropout is not supported (must be 0)");
}

std::size_t Tensor::cols() const {
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
  return c;
}

Tensor& ModelParams::add(std::string name, std::vector<std::size_t> shape) {
  if (index_.count(name)) throw std::invalid_argument("duplicate tensor " + name);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  Tensor t;
  t.name = name;
  t.shape = std::move(shape);
  t.value.assign(n, 0.0);
  t.grad.assign(n, 0.0);
  t.moment1.assign(n, 0.0);
  t.moment2.assign(n, 0.0);
  index_[name] = tensors_.size();
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
  return tensors_[it->second];
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
  return tensors_[it->second];
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_)
    for (double v : t.value)
      if (!std::isfinite(v)) return false;
  return true;
}

bool ModelParams::grads_finite() const {
  for (const auto& t : tensors_)
    for (double g : t.grad)
      if (!std::isfinite(g)) return false;
  return true;
}

double ModelParams::grad_norm() const {
  double s = 0.0;
  for (const auto& t : tensors_)
    for (double g : t.grad) s += g * g;
  return std::sqrt(s);
}

void ModelParams::scale_grads(double factor) {
  for (auto& t : tensors_)
    for (double& g : t.grad) g *= factor;
}

bool optimizer_step(ModelParams& params, double learning_rate, const AdamConfig& cfg) {
  if (!params.grads_finite()) return false;
  const long step = ++params.optimizer_steps;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (auto& t : params.tensors()) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      t.moment1[i] = cfg.beta1 * t.moment1[i] + (1.0 - cfg.beta1) * g;
      t.moment2[i] = cfg.beta2 * t.moment2[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = t.moment1[i] / c1;
      const double vhat = t.moment2[i] / c2;
      t.value[i] -= learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

Transformer::Transformer(const TransformerConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.embed_dim;
  const std::size_t in = cfg_.input_width;
  const std::size_t out = cfg_.output_width;
  auto normal_fill = [&](Tensor& t) {
    for (double& v : t.value) v = cfg_.init_std * init_rng.normal();
  };
  auto ones = [](Tensor& t) { std::fill(t.value.begin(), t.value.end(), 1.0); };

  normal_fill(params_.add("embed.weight", {in, d}));
  params_.add("embed.bias", {d});
  Tensor& pos = params_.add("pos.weight", {static_cast<std::size_t>(cfg_.max_positions()), d});
  if (cfg_.learned_positions) {
    normal_fill(pos);
  } else {
    // Fixed sinusoidal table; it still lives in the tensor set but receives no updates.
    for (std::size_t p = 0; p < pos.rows(); ++p) {
      for (std::size_t i = 0; i < d; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        pos.value[p * d + i] = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
      }
    }
  }
  for (int l = 0; l < cfg_.num_layers; ++l) {
    ones(params_.add(layer_name(l, "ln1.gain"), {d}));
    params_.add(layer_name(l, "ln1.bias"), {d});
    normal_fill(params_.add(layer_name(l, "attn.qkv.weight"), {d, 3 * d}));
    params_.add(layer_name(l, "attn.qkv.bias"), {3 * d});
    normal_fill(params_.add(layer_name(l, "attn.proj.weight"), {d, d}));
    params_.add(layer_name(l, "attn.proj.bias"), {d});
    ones(params_.add(layer_name(l, "ln2.gain"), {d}));
    params_.add(layer_name(l, "ln2.bias"), {d});
    normal_fill(params_.add(layer_name(l, "mlp.fc.weight"), {d, 4 * d}));
    params_.add(layer_name(l, "mlp.fc.bias"), {4 * d});
    normal_fill(params_.add(layer_name(l, "mlp.proj.weight"), {4 * d, d}));
    params_.add(layer_name(l, "mlp.proj.bias"), {d});
  }
  ones(params_.add("ln_f.gain", {d}));
  params_.add("ln_f.bias", {d});
  params_.add("head.weight", {d, out});
  params_.add("head.bias", {out});
  bind();
}

void Transformer::bind() {
  auto idx = [&](const std::string& name) {
    const Tensor* base = params_.tensors().data();
    return static_cast<std::size_t>(&params_.at(name) - base);
  };
  embed_w_ = idx("embed.weight");
  embed_b_ = idx("embed.bias");
  pos_ = idx("pos.weight");
  lnf_gain_ = idx("ln_f.gain");
  lnf_bias_ = idx("ln_f.bias");
  head_w_ = idx("head.weight");
  head_b_ = idx("head.bias");
  layers_.clear();
  for (int l = 0; l < cfg_.num_layers; ++l) {
    layers_.push_back(Layer{idx(layer_name(l, "ln1.gain")), idx(layer_name(l, "ln1.bias")),
                            idx(layer_name(l, "attn.qkv.weight")), idx(layer_name(l, "attn.qkv.bias")),
                            idx(layer_name(l, "attn.proj.weight")), idx(layer_name(l, "attn.proj.bias")),
                            idx(layer_name(l, "ln2.gain")), idx(layer_name(l, "ln2.bias")),
                            idx(layer_name(l, "mlp.fc.weight")), idx(layer_name(l, "mlp.fc.bias")),
                            idx(layer_name(l, "mlp.proj.weight")), idx(layer_name(l, "mlp.proj.bias"))});
  }
}

std::vector<Mat> Transformer::forward(const std::vector<Mat>& sequences) const {
  ForwardCache cache;
  return forward(sequences, cache);
}

std::vector<Mat> Transformer::forward(const std::vector<Mat>& sequences, ForwardCache& cache) const {
  const auto& T = params_.tensors();
  const int d = cfg_.embed_dim;
  const int heads = cfg_.num_heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  cache.offsets.clear();
  cache.lengths.clear();
  int total = 0;
  for (const auto& s : sequences) {
    if (s.rows() < 1 || s.rows() > cfg_.max_positions()) {
      throw std::invalid_argument("sequence length " + std::to_string(s.rows()) + " outside [1, " +
                                  std::to_string(cfg_.max_positions()) + "]");
    }
    if (s.cols() != cfg_.input_width) throw std::invalid_argument("token width does not match input_width");
    cache.offsets.push_back(total);
    cache.lengths.push_back(static_cast<int>(s.rows()));
    total += static_cast<int>(s.rows());
  }
  cache.input.resize(total, cfg_.input_width);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    cache.input.middleRows(cache.offsets[i], cache.lengths[i]) = sequences[i];
  }

  Mat x = cache.input * weight(T[embed_w_]);
  x.rowwise() += bias(T[embed_b_]);
  const MapW pos = weight(T[pos_]);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    x.middleRows(cache.offsets[i], cache.lengths[i]) += pos.topRows(cache.lengths[i]);
  }

  cache.layers.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    auto& c = cache.layers[l];
    c.x_in = x;
    layer_norm(x, T[L.ln1_gain], T[L.ln1_bias], c.ln1_hat, c.ln1_rstd, c.ln1_out);
    c.qkv = c.ln1_out * weight(T[L.qkv_w]);
    c.qkv.rowwise() += bias(T[L.qkv_b]);
    c.attn_cat.resize(total, d);
    c.probs.resize(sequences.size() * heads);
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      const int off = cache.offsets[s];
      const int len = cache.lengths[s];
      for (int h = 0; h < heads; ++h) {
        const auto q = c.qkv.block(off, h * dh, len, dh);
        const auto k = c.qkv.block(off, d + h * dh, len, dh);
        const auto v = c.qkv.block(off, 2 * d + h * dh, len, dh);
        Mat& pt = c.probs[s * heads + h];
        pt.noalias() = scale * (k * q.transpose());
        causal_softmax_columns(pt);
        c.attn_cat.block(off, h * dh, len, dh).noalias() = pt.transpose() * v;
      }
    }
    c.x_mid = x + c.attn_cat * weight(T[L.proj_w]);
    c.x_mid.rowwise() += bias(T[L.proj_b]);
    layer_norm(c.x_mid, T[L.ln2_gain], T[L.ln2_bias], c.ln2_hat, c.ln2_rstd, c.ln2_out);
    c.fc_pre = c.ln2_out * weight(T[L.fc_w]);
    c.fc_pre.rowwise() += bias(T[L.fc_b]);
    c.fc_act = gelu(c.fc_pre);
    x = c.x_mid + c.fc_act * weight(T[L.out_w]);
    x.rowwise() += bias(T[L.out_b]);
  }
  cache.x_final = x;
  layer_norm(x, T[lnf_gain_], T[lnf_bias_], cache.lnf_hat, cache.lnf_rstd, cache.lnf_out);
  Mat out = cache.lnf_out * weight(T[head_w_]);
  out.rowwise() += bias(T[head_b_]);

  std::vector<Mat> result;
  result.reserve(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) result.push_back(out.middleRows(cache.offsets[i], cache.lengths[i]));
  return result;
}

void Transformer::backward(const ForwardCache& cache, const std::vector<Mat>& output_grads) {
  auto& T = params_.tensors();
  const int d = cfg_.embed_dim;
  const int heads = cfg_.num_heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (output_grads.size() != cache.lengths.size()) throw std::invalid_argument("backward: batch size mismatch");
  const int total = static_cast<int>(cache.input.rows());

  Mat dout(total, cfg_.output_width);
  for (std::size_t i = 0; i < output_grads.size(); ++i) {
    if (output_grads[i].rows() != cache.lengths[i] || output_grads[i].cols() != cfg_.output_width) {
      throw std::invalid_argument("backward: output gradient shape mismatch");
    }
    dout.middleRows(cache.offsets[i], cache.lengths[i]) = output_grads[i];
  }

  weight_grad(T[head_w_]).noalias() += cache.lnf_out.transpose() * dout;
  bias_grad(T[head_b_]) += dout.colwise().sum();
  Mat dx = layer_norm_backward(dout * weight(T[head_w_]).transpose(), cache.lnf_hat, cache.lnf_rstd, T[lnf_gain_],
                               T[lnf_bias_]);

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& L = layers_[li];
    const auto& c = cache.layers[li];
    // MLP branch.
    weight_grad(T[L.out_w]).noalias() += c.fc_act.transpose() * dx;
    bias_grad(T[L.out_b]) += dx.colwise().sum();
    Mat dfc = dx * weight(T[L.out_w]).transpose();
    dfc.array() *= gelu_grad(c.fc_pre).array();
    weight_grad(T[L.fc_w]).noalias() += c.ln2_out.transpose() * dfc;
    bias_grad(T[L.fc_b]) += dfc.colwise().sum();
    dx += layer_norm_backward(dfc * weight(T[L.fc_w]).transpose(), c.ln2_hat, c.ln2_rstd, T[L.ln2_gain], T[L.ln2_bias]);

    // Attention branch.
    weight_grad(T[L.proj_w]).noalias() += c.attn_cat.transpose() * dx;
    bias_grad(T[L.proj_b]) += dx.colwise().sum();
    const Mat dcat = dx * weight(T[L.proj_w]).transpose();
    Mat dqkv(total, 3 * d);
    for (std::size_t s = 0; s < cache.lengths.size(); ++s) {
      const int off = cache.offsets[s];
      const int len = cache.lengths[s];
      for (int h = 0; h < heads; ++h) {
        const auto q = c.qkv.block(off, h * dh, len, dh);
        const auto k = c.qkv.block(off, d + h * dh, len, dh);
        const auto v = c.qkv.block(off, 2 * d + h * dh, len, dh);
        const Mat& pt = c.probs[s * heads + h];
        const auto dO = dcat.block(off, h * dh, len, dh);
        Mat dst = v * dO.transpose();
        dqkv.block(off, 2 * d + h * dh, len, dh).noalias() = pt * dO;
        for (int col = 0; col < len; ++col) {
          auto g = dst.col(col).head(col + 1);
          const auto p = pt.col(col).head(col + 1);
          const double dot = g.dot(p);
          g = (p.array() * (g.array() - dot)).matrix();
          dst.col(col).tail(len - col - 1).setZero();
        }
        dqkv.block(off, h * dh, len, dh).noalias() = scale * (dst.transpose() * k);
        dqkv.block(off, d + h * dh, len, dh).noalias() = scale * (dst * q);
      }
    }
    weight_grad(T[L.qkv_w]).noalias() += c.ln1_out.transpose() * dqkv;
    bias_grad(T[L.qkv_b]) += dqkv.colwise().sum();
    dx += layer_norm_backward(dqkv * weight(T[L.qkv_w]).transpose(), c.ln1_hat, c.ln1_rstd, T[L.ln1_gain], T[L.ln1_bias]);
  }

  if (cfg_.learned_positions) {
    MapG dpos = weight_grad(T[pos_]);
    for (std::size_t i = 0; i < cache.lengths.size(); ++i) {
      dpos.topRows(cache.lengths[i]) += dx.middleRows(cache.offsets[i], cache.lengths[i]);
    }
  }
  weight_grad(T[embed_w_]).noalias() += cache.input.transpose() * dx;
  bias_grad(T[embed_b_]) += dx.colwise().sum();
}

// ---------------------------------------------------------------------------

IncrementalDecoder::IncrementalDecoder(const Transformer& model) : model_(&model) { reset(); }

void IncrementalDecoder::reset() {
  const auto& cfg = model_->config();
  keys_.assign(cfg.num_layers, Mat(cfg.max_positions(), cfg.embed_dim));
  values_.assign(cfg.num_layers, Mat(cfg.max_positions(), cfg.embed_dim));
  length_ = 0;
}

Vec IncrementalDecoder::push(const Vec& token) {
  const auto& cfg = model_->config();
  const auto& T = model_->params_.tensors();
  if (length_ >= cfg.max_positions()) throw std::invalid_argument("incremental decoder: context capacity exceeded");
  if (token.size() != cfg.input_width) throw std::invalid_argument("token width does not match input_width");
  const int d = cfg.embed_dim;
  const int heads = cfg.num_heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int t = length_;

  RowVec x = token.transpose() * weight(T[model_->embed_w_]);
  x += bias(T[model_->embed_b_]);
  x += weight(T[model_->pos_]).row(t);
  RowVec cat(d);
  for (std::size_t l = 0; l < model_->layers_.size(); ++l) {
    const auto& L = model_->layers_[l];
    const RowVec n1 = layer_norm_row(x, T[L.ln1_gain], T[L.ln1_bias]);
    RowVec qkv = n1 * weight(T[L.qkv_w]);
    qkv += bias(T[L.qkv_b]);
    keys_[l].row(t) = qkv.segment(d, d);
    values_[l].row(t) = qkv.segment(2 * d, d);
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.segment(h * dh, dh);
      Vec s = scale * (keys_[l].block(0, h * dh, t + 1, dh) * q.transpose());
      const double mx = s.maxCoeff();
      s = (s.array() - mx).exp();
      s /= s.sum();
      cat.segment(h * dh, dh) = s.transpose() * values_[l].block(0, h * dh, t + 1, dh);
    }
    x += cat * weight(T[L.proj_w]);
    x += bias(T[L.proj_b]);
    const RowVec n2 = layer_norm_row(x, T[L.ln2_gain], T[L.ln2_bias]);
    RowVec fc = n2 * weight(T[L.fc_w]);
    fc += bias(T[L.fc_b]);
    fc = gelu(fc);
    x += fc * weight(T[L.out_w]);
    x += bias(T[L.out_b]);
  }
  const RowVec nf = layer_norm_row(x, T[model_->lnf_gain_], T[model_->lnf_bias_]);
  RowVec out = nf * weight(T[model_->head_w_]);
  out += bias(T[model_->head_b_]);
  ++length_;
  return out.transpose();
}

// ---------------------------------------------------------------------------

std::vector<double> softmax_row(const Vec& logits) {
  const double mx = logits.maxCoeff();
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

double nll_loss(const Mat& logits, const std::vector<int>& targets, Mat* grad) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) throw std::invalid_argument("nll_loss: target count mismatch");
  int active = 0;
  for (int t : targets) {
    if (t >= logits.cols()) throw std::invalid_argument("nll_loss: target out of range");
    if (t >= 0) ++active;
  }
  if (active == 0) throw std::invalid_argument("nll_loss: empty mask");
  if (grad) grad->setZero(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[r];
    if (t < 0) continue;
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    loss += lse - logits(r, t);
    if (grad) {
      grad->row(r) = (logits.row(r).array() - lse).exp() / active;
      (*grad)(r, t) -= 1.0 / active;
    }
  }
  return loss / active;
}

// ---------------------------------------------------------------------------

TokenLayout TokenLayout::for_task(const Task& task) {
  TokenLayout layout;
  layout.kind = kind_of(task);
  layout.num_states = ricl::num_states(task);
  layout.num_actions = ricl::num_actions(task);
  if (const auto* lin = std::get_if<LinearBanditTask>(&task)) layout.features = lin->features;
  return layout;
}

TokenLayout TokenLayout::for_distribution(const TaskDistribution& dist) {
  TokenLayout layout;
  layout.kind = dist.kind;
  layout.num_states = dist.state_count();
  layout.num_actions = dist.action_count();
  layout.features = dist.features;
  return layout;
}

int TokenLayout::width() const {
  switch (kind) {
    case EnvKind::kBandit:
      return num_actions + 1;
    case EnvKind::kLinear:
      return static_cast<int>(features.front().size()) + 1;
    case EnvKind::kDarkroom2:
      return 2 * num_states + num_actions + 1;
  }
  return 0;
}

Vec TokenLayout::encode(const VictimTransition& t) const {
  Vec v = Vec::Zero(width());
  switch (kind) {
    case EnvKind::kBandit:
      v[t.action] = 1.0;
      v[num_actions] = t.reward;
      break;
    case EnvKind::kLinear: {
      const auto& psi = features.at(t.action);
      for (std::size_t i = 0; i < psi.size(); ++i) v[i] = psi[i];
      v[psi.size()] = t.reward;
      break;
    }
    case EnvKind::kDarkroom2:
      v[t.state] = 1.0;
      v[num_states + t.action] = 1.0;
      v[num_states + num_actions] = t.reward;
      v[num_states + num_actions + 1 + t.next_state] = 1.0;
      break;
  }
  return v;
}

Vec TokenLayout::encode_query(int query_state) const {
  Vec v = Vec::Zero(width());
  if (kind == EnvKind::kDarkroom2) v[query_state] = 1.0;
  return v;
}

VictimTransition TokenLayout::decode(const Vec& token) const {
  if (token.size() != width()) throw std::invalid_argument("decode: token width mismatch");
  auto hot = [&](int begin, int count) {
    for (int i = 0; i < count; ++i)
      if (token[begin + i] == 1.0) return i;
    throw std::invalid_argument("decode: missing one-hot field");
  };
  VictimTransition t;
  switch (kind) {
    case EnvKind::kBandit:
      t.action = hot(0, num_actions);
      t.reward = token[num_actions];
      break;
    case EnvKind::kLinear: {
      const int dim = width() - 1;
      t.action = -1;
      for (std::size_t a = 0; a < features.size() && t.action < 0; ++a) {
        bool same = true;
        for (int i = 0; i < dim; ++i) same = same && features[a][i] == token[i];
        if (same) t.action = static_cast<int>(a);
      }
      if (t.action < 0) throw std::invalid_argument("decode: feature vector matches no action");
      t.reward = token[dim];
      break;
    }
    case EnvKind::kDarkroom2:
      t.state = hot(0, num_states);
      t.action = hot(num_states, num_actions);
      t.reward = token[num_states + num_actions];
      t.next_state = hot(num_states + num_actions + 1, num_states);
      break;
  }
  return t;
}

Mat encode_context(const TokenLayout& layout, const std::vector<VictimTransition>& context, int query_state) {
  Mat m(static_cast<Eigen::Index>(context.size()) + 1, layout.width());
  m.row(0) = layout.encode_query(query_state).transpose();
  for (std::size_t i = 0; i < context.size(); ++i) m.row(i + 1) = layout.encode(context[i]).transpose();
  return m;
}

}  // namespace ricl
