#pragma once

// Fully connected binary classifier: ReLU hidden layers with optional batch
// normalization and inverted dropout, a single sigmoid output node, L2 weight
// decay, Adam/RMSProp updates. Everything is float64.
//
// Hidden layer:  affine -> [batch-norm] -> ReLU -> [dropout]
// Output:        affine -> sigmoid
// Dropout on the input features happens before the first affine map.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ocon/binary_io.hpp"
#include "ocon/config.hpp"
#include "ocon/error.hpp"
#include "ocon/rng.hpp"

namespace ocon {

enum class Activation : std::uint8_t { ReLU };
enum class OptimizerKind : std::uint8_t { Adam, RMSProp };
enum class LossKind : std::uint8_t { CrossEntropy, SquaredError };

inline constexpr std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "rmsprop"; }

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kRmsPropDecay = 0.9;
inline constexpr double kOptimizerEpsilon = 1e-8;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;

struct MlpConfig {
  std::size_t input_dim = 3;
  std::vector<std::size_t> hidden = {100};
  Activation activation = Activation::ReLU;
  /// Keep probabilities for inverted dropout; 1 disables.
  double keep_input = 1.0;
  double keep_hidden = 1.0;
  bool batch_norm = false;
  double l2_lambda = 0.0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::CrossEntropy;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
    if (input_dim < 1) fail("input_dim must be >= 1");
    for (auto w : hidden)
      if (w < 1) fail("hidden widths must be >= 1");
    if (!(keep_input > 0.0 && keep_input <= 1.0)) fail("keep_input must be in (0, 1]");
    if (!(keep_hidden > 0.0 && keep_hidden <= 1.0)) fail("keep_hidden must be in (0, 1]");
    if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) fail("l2 must be finite and >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning rate must be finite and > 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
  }

  /// The tuned one-class architecture: 100 ReLU units, Kaiming init, Adam at
  /// 1e-4, batches of 32, keep 0.8 (input) / 0.5 (hidden), batch-norm, L2 1e-4.
  static MlpConfig tuned(std::size_t input_dim) {
    MlpConfig c;
    c.input_dim = input_dim;
    c.hidden = {100};
    c.keep_input = 0.8;
    c.keep_hidden = 0.5;
    c.batch_norm = true;
    c.l2_lambda = 1e-4;
    c.optimizer = OptimizerKind::Adam;
    c.learning_rate = 1e-4;
    c.batch_size = 32;
    return c;
  }

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<Eigen::VectorXd> first;   // Adam m; unused by RMSProp
  std::vector<Eigen::VectorXd> second;  // Adam v / RMSProp mean square
};

/// Layer l maps hidden[l-1] (or input) to hidden[l]; the last weight matrix
/// is the 1 x width output row. Batch-norm vectors exist per hidden layer
/// only when enabled.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  std::vector<Eigen::VectorXd> gamma;
  std::vector<Eigen::VectorXd> beta;
  std::vector<Eigen::VectorXd> running_mean;
  std::vector<Eigen::VectorXd> running_var;
  OptimizerState optimizer;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  std::vector<Eigen::VectorXd> gamma;
  std::vector<Eigen::VectorXd> beta;
};

/// Flat views of the trainable tensors in a fixed order: per layer W, b,
/// then (gamma, beta) for batch-normalized hidden layers.
template <class P>
auto trainable_views(P& p) {
  using Elem = std::conditional_t<std::is_const_v<P>, const double, double>;
  std::vector<std::span<Elem>> views;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    views.emplace_back(p.weights[l].data(), static_cast<std::size_t>(p.weights[l].size()));
    views.emplace_back(p.biases[l].data(), static_cast<std::size_t>(p.biases[l].size()));
    if (l < p.gamma.size()) {
      views.emplace_back(p.gamma[l].data(), static_cast<std::size_t>(p.gamma[l].size()));
      views.emplace_back(p.beta[l].data(), static_cast<std::size_t>(p.beta[l].size()));
    }
  }
  return views;
}

/// Kaiming-He normal weights (std = sqrt(2 / fan_in)), zero biases,
/// gamma = 1, beta = 0, running statistics (0, 1).
inline MlpParams init_params(const MlpConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, Stream::Init));
  MlpParams p;
  std::size_t fan_in = config.input_dim;
  auto add_layer = [&](std::size_t width) {
    Eigen::MatrixXd w(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(fan_in));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = sd * rng.normal();
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width)));
    fan_in = width;
  };
  for (auto width : config.hidden) {
    add_layer(width);
    if (config.batch_norm) {
      const auto n = static_cast<Eigen::Index>(width);
      p.gamma.push_back(Eigen::VectorXd::Ones(n));
      p.beta.push_back(Eigen::VectorXd::Zero(n));
      p.running_mean.push_back(Eigen::VectorXd::Zero(n));
      p.running_var.push_back(Eigen::VectorXd::Ones(n));
    }
  }
  add_layer(1);
  return p;
}

enum class Mode { Train, Infer };

struct HiddenCache {
  Eigen::MatrixXd input;    // after dropout on the previous activation
  Eigen::MatrixXd pre_act;  // after affine (+ batch-norm)
  Eigen::MatrixXd xhat;     // batch-normalized, before gamma/beta
  Eigen::RowVectorXd batch_mean;
  Eigen::RowVectorXd batch_var;
  Eigen::RowVectorXd inv_std;
  Eigen::MatrixXd dropout_scale;  // mask / keep, empty when dropout is off
};

struct ForwardCache {
  Mode mode = Mode::Infer;
  std::vector<HiddenCache> hidden;
  Eigen::MatrixXd last_hidden;  // input to the output layer
  Eigen::VectorXd logits;       // pre-sigmoid
  Eigen::VectorXd probabilities;
};

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

namespace detail {

inline Eigen::MatrixXd dropout_scale(Eigen::Index rows, Eigen::Index cols, double keep, Rng& rng) {
  Eigen::MatrixXd scale(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) scale(i, j) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return scale;
}

}  // namespace detail

/// Pure forward pass over a B x d batch. Train mode uses batch statistics
/// and draws dropout masks from `dropout_rng` (required when any keep < 1);
/// running statistics are updated separately by update_running_stats.
inline ForwardCache forward(const MlpParams& params, const MlpConfig& config, const Eigen::MatrixXd& batch, Mode mode,
                            Rng* dropout_rng = nullptr) {
  if (static_cast<std::size_t>(batch.cols()) != config.input_dim)
    throw Error(Errc::DimensionMismatch, "batch has " + std::to_string(batch.cols()) + " features, model expects " +
                                             std::to_string(config.input_dim));
  const bool drop = mode == Mode::Train && (config.keep_input < 1.0 || config.keep_hidden < 1.0);
  if (drop && dropout_rng == nullptr) throw Error(Errc::InvalidConfig, "train-mode dropout requires an rng");

  ForwardCache cache;
  cache.mode = mode;
  const Eigen::Index rows = batch.rows();
  Eigen::MatrixXd a = batch;
  if (mode == Mode::Train && config.keep_input < 1.0) a = a.cwiseProduct(detail::dropout_scale(rows, a.cols(), config.keep_input, *dropout_rng));

  const std::size_t hidden_layers = config.hidden.size();
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    HiddenCache hc;
    hc.input = std::move(a);
    Eigen::MatrixXd z = hc.input * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    if (config.batch_norm) {
      if (mode == Mode::Train) {
        hc.batch_mean = z.colwise().mean();
        Eigen::MatrixXd centered = z.rowwise() - hc.batch_mean;
        hc.batch_var = centered.array().square().colwise().mean();
        hc.inv_std = (hc.batch_var.array() + kBatchNormEpsilon).rsqrt();
        hc.xhat = centered.array().rowwise() * hc.inv_std.array();
      } else {
        const Eigen::RowVectorXd inv = (params.running_var[l].array() + kBatchNormEpsilon).rsqrt().transpose();
        hc.xhat = (z.rowwise() - params.running_mean[l].transpose()).array().rowwise() * inv.array();
      }
      z = (hc.xhat.array().rowwise() * params.gamma[l].transpose().array()).matrix();
      z.rowwise() += params.beta[l].transpose();
    }
    hc.pre_act = std::move(z);
    a = hc.pre_act.cwiseMax(0.0);
    if (mode == Mode::Train && config.keep_hidden < 1.0) {
      hc.dropout_scale = detail::dropout_scale(rows, a.cols(), config.keep_hidden, *dropout_rng);
      a = a.cwiseProduct(hc.dropout_scale);
    }
    cache.hidden.push_back(std::move(hc));
  }

  cache.last_hidden = std::move(a);
  cache.logits = cache.last_hidden * params.weights.back().row(0).transpose();
  cache.logits.array() += params.biases.back()(0);
  cache.probabilities = cache.logits.unaryExpr([](double s) { return sigmoid(s); });
  return cache;
}

/// Inference-mode probabilities.
inline Eigen::VectorXd predict(const MlpParams& params, const MlpConfig& config, const Eigen::MatrixXd& batch) {
  return forward(params, config, batch, Mode::Infer).probabilities;
}

/// Exponential moving average of the batch statistics in a train-mode
/// cache (unbiased variance for the running estimate).
inline void update_running_stats(MlpParams& params, const MlpConfig& config, const ForwardCache& cache, Eigen::Index batch_rows) {
  if (!config.batch_norm || cache.mode != Mode::Train) return;
  const double correction = batch_rows > 1 ? static_cast<double>(batch_rows) / static_cast<double>(batch_rows - 1) : 1.0;
  for (std::size_t l = 0; l < cache.hidden.size(); ++l) {
    params.running_mean[l] = (1.0 - kBatchNormMomentum) * params.running_mean[l] + kBatchNormMomentum * cache.hidden[l].batch_mean.transpose();
    params.running_var[l] =
        (1.0 - kBatchNormMomentum) * params.running_var[l] + kBatchNormMomentum * correction * cache.hidden[l].batch_var.transpose();
  }
}

/// Per-sample data loss from a pre-sigmoid logit.
inline double sample_loss(double logit, double target, LossKind kind) {
  if (kind == LossKind::CrossEntropy) return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
  const double diff = sigmoid(logit) - target;
  return diff * diff;
}

inline double l2_penalty(const MlpParams& params, double lambda) {
  double sum = 0.0;
  for (const auto& w : params.weights) sum += w.squaredNorm();
  return 0.5 * lambda * sum;
}

struct LossAndGrads {
  double loss = 0.0;       // data loss + L2 penalty
  double data_loss = 0.0;  // batch mean
  Eigen::VectorXd sample_losses;
  Gradients grads;
};

/// Mean data loss + (lambda/2) * sum of squared weights, and its gradient by
/// backpropagation through the cached forward pass.
inline LossAndGrads loss_and_grads(const MlpParams& params, const MlpConfig& config, const ForwardCache& cache,
                                   std::span<const double> targets) {
  const auto rows = cache.logits.size();
  if (static_cast<Eigen::Index>(targets.size()) != rows)
    throw Error(Errc::DimensionMismatch, "targets do not match batch size");

  LossAndGrads out;
  out.sample_losses.resize(rows);
  Eigen::VectorXd d_logit(rows);
  const double inv_b = 1.0 / static_cast<double>(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double s = cache.logits(i);
    const double y = targets[static_cast<std::size_t>(i)];
    const double p = cache.probabilities(i);
    out.sample_losses(i) = sample_loss(s, y, config.loss);
    d_logit(i) = inv_b * (config.loss == LossKind::CrossEntropy ? p - y : 2.0 * (p - y) * p * (1.0 - p));
  }
  out.data_loss = out.sample_losses.mean();
  out.loss = out.data_loss + l2_penalty(params, config.l2_lambda);
  if (!std::isfinite(out.loss)) throw Error(Errc::NonFiniteLoss, "loss = " + format_double(out.loss));

  const std::size_t layers = params.weights.size();
  auto& g = out.grads;
  g.weights.resize(layers);
  g.biases.resize(layers);
  g.gamma.resize(params.gamma.size());
  g.beta.resize(params.beta.size());

  g.weights[layers - 1] = d_logit.transpose() * cache.last_hidden;
  g.biases[layers - 1] = Eigen::VectorXd::Constant(1, d_logit.sum());
  Eigen::MatrixXd da = d_logit * params.weights[layers - 1];

  for (std::size_t l = layers - 1; l-- > 0;) {
    const auto& hc = cache.hidden[l];
    if (hc.dropout_scale.size() > 0) da = da.cwiseProduct(hc.dropout_scale);
    Eigen::MatrixXd dz = (hc.pre_act.array() > 0.0).select(da, 0.0);
    if (config.batch_norm) {
      g.gamma[l] = (dz.cwiseProduct(hc.xhat)).colwise().sum().transpose();
      g.beta[l] = dz.colwise().sum().transpose();
      if (cache.mode == Mode::Train) {
        const Eigen::MatrixXd dxhat = dz.array().rowwise() * params.gamma[l].transpose().array();
        const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(hc.xhat).colwise().sum();
        const double b = static_cast<double>(rows);
        Eigen::MatrixXd inner = (b * dxhat).rowwise() - sum_dxhat;
        inner -= (hc.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
        dz = (inner.array().rowwise() * (hc.inv_std.array() / b)).matrix();
      } else {
        const Eigen::RowVectorXd inv = (params.running_var[l].array() + kBatchNormEpsilon).rsqrt().transpose();
        dz = (dz.array().rowwise() * (params.gamma[l].transpose().array() * inv.array())).matrix();
      }
    }
    g.weights[l] = dz.transpose() * hc.input;
    g.biases[l] = dz.colwise().sum().transpose();
    if (l > 0) da = dz * params.weights[l];
  }
  for (std::size_t l = 0; l < layers; ++l) g.weights[l] += config.l2_lambda * params.weights[l];
  return out;
}

/// One Adam (bias-corrected) or RMSProp update; increments the step counter.
inline void optimizer_step(MlpParams& params, const Gradients& grads, const MlpConfig& config) {
  auto p_views = trainable_views(params);
  const auto g_views = trainable_views(grads);
  if (p_views.size() != g_views.size()) throw Error(Errc::DimensionMismatch, "gradient structure does not match parameters");
  auto& state = params.optimizer;
  if (state.second.size() != p_views.size()) {
    state.first.assign(p_views.size(), {});
    state.second.assign(p_views.size(), {});
    for (std::size_t k = 0; k < p_views.size(); ++k) {
      state.first[k] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p_views[k].size()));
      state.second[k] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p_views[k].size()));
    }
  }
  ++state.step;
  const double lr = config.learning_rate;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bias2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < p_views.size(); ++k) {
    if (p_views[k].size() != g_views[k].size()) throw Error(Errc::DimensionMismatch, "gradient tensor shape mismatch");
    Eigen::Map<Eigen::VectorXd> p(p_views[k].data(), static_cast<Eigen::Index>(p_views[k].size()));
    Eigen::Map<const Eigen::VectorXd> g(g_views[k].data(), static_cast<Eigen::Index>(g_views[k].size()));
    auto& m = state.first[k];
    auto& v = state.second[k];
    if (config.optimizer == OptimizerKind::Adam) {
      m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
      v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
      p.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + kOptimizerEpsilon);
    } else {
      v = kRmsPropDecay * v + (1.0 - kRmsPropDecay) * g.cwiseProduct(g);
      p.array() -= lr * g.array() / (v.array().sqrt() + kOptimizerEpsilon);
    }
  }
}

struct StepResult {
  double loss = 0.0;
  Eigen::VectorXd sample_losses;
};

/// forward (train) -> loss/gradients -> running stats -> optimizer update.
inline StepResult train_step(MlpParams& params, const MlpConfig& config, const Eigen::MatrixXd& batch,
                             std::span<const double> targets, Rng& dropout_rng) {
  const ForwardCache cache = forward(params, config, batch, Mode::Train, &dropout_rng);
  LossAndGrads lg = loss_and_grads(params, config, cache, targets);
  update_running_stats(params, config, cache, batch.rows());
  optimizer_step(params, lg.grads, config);
  return {lg.loss, std::move(lg.sample_losses)};
}

// ---------------------------------------------------------------------------
// Checkpoints

/// A trained member: configuration, parameters, the hash of the scaling it
/// was trained under and the hash of its training manifest.
struct MlpModel {
  MlpConfig config;
  MlpParams params;
  std::uint64_t scaling_hash = 0;
  std::string manifest_hash;
};

inline constexpr std::uint8_t kCheckpointFormatVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "OCONCKP";

namespace detail {

inline void put_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.put(m(i, j));
}

inline Eigen::MatrixXd get_matrix(ByteReader& r, Eigen::Index rows, Eigen::Index cols) {
  if (r.get<std::uint64_t>() != static_cast<std::uint64_t>(rows) || r.get<std::uint64_t>() != static_cast<std::uint64_t>(cols))
    throw Error(Errc::CorruptPayload, "tensor shape does not match configuration");
  r.need_items(static_cast<std::uint64_t>(rows * cols), sizeof(double));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.get<double>();
  return m;
}

inline void put_vector(ByteWriter& w, const Eigen::VectorXd& v) { w.put_doubles({v.data(), static_cast<std::size_t>(v.size())}); }

inline Eigen::VectorXd get_vector(ByteReader& r, Eigen::Index expected) {
  const auto values = r.get_doubles();
  if (static_cast<Eigen::Index>(values.size()) != expected) throw Error(Errc::CorruptPayload, "vector length does not match configuration");
  return Eigen::Map<const Eigen::VectorXd>(values.data(), expected);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const MlpModel& model) {
  const auto& c = model.config;
  const auto& p = model.params;
  ByteWriter w;
  for (char ch : kCheckpointMagic) w.put(static_cast<std::uint8_t>(ch));
  w.put(kCheckpointFormatVersion);
  w.put<std::uint64_t>(c.input_dim);
  w.put<std::uint64_t>(c.hidden.size());
  for (auto h : c.hidden) w.put<std::uint64_t>(h);
  w.put(static_cast<std::uint8_t>(c.activation));
  w.put(c.keep_input);
  w.put(c.keep_hidden);
  w.put(static_cast<std::uint8_t>(c.batch_norm));
  w.put(c.l2_lambda);
  w.put(static_cast<std::uint8_t>(c.optimizer));
  w.put(c.learning_rate);
  w.put<std::uint64_t>(c.batch_size);
  w.put<std::uint64_t>(c.seed);
  w.put(static_cast<std::uint8_t>(c.loss));
  w.put<std::uint64_t>(model.scaling_hash);
  w.put_string(model.manifest_hash);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    detail::put_matrix(w, p.weights[l]);
    detail::put_vector(w, p.biases[l]);
  }
  for (std::size_t l = 0; l < p.gamma.size(); ++l) {
    detail::put_vector(w, p.gamma[l]);
    detail::put_vector(w, p.beta[l]);
    detail::put_vector(w, p.running_mean[l]);
    detail::put_vector(w, p.running_var[l]);
  }
  w.put<std::uint64_t>(p.optimizer.step);
  w.put<std::uint64_t>(p.optimizer.second.size());
  for (std::size_t k = 0; k < p.optimizer.second.size(); ++k) {
    detail::put_vector(w, p.optimizer.first[k]);
    detail::put_vector(w, p.optimizer.second[k]);
  }
  w.seal();
  return w.bytes();
}

inline MlpModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  for (char ch : kCheckpointMagic)
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(ch)) throw Error(Errc::CorruptPayload, "not a checkpoint file");
  if (const auto version = r.get<std::uint8_t>(); version != kCheckpointFormatVersion)
    throw Error(Errc::VersionMismatch, "checkpoint version " + std::to_string(version));
  r.verify_seal();

  MlpModel model;
  auto& c = model.config;
  c.input_dim = r.get<std::uint64_t>();
  const auto depth = r.get<std::uint64_t>();
  r.need_items(depth, sizeof(std::uint64_t));
  c.hidden.resize(depth);
  for (auto& h : c.hidden) h = r.get<std::uint64_t>();
  const auto activation = r.get<std::uint8_t>();
  c.keep_input = r.get<double>();
  c.keep_hidden = r.get<double>();
  c.batch_norm = r.get<std::uint8_t>() != 0;
  c.l2_lambda = r.get<double>();
  const auto optimizer = r.get<std::uint8_t>();
  c.learning_rate = r.get<double>();
  c.batch_size = r.get<std::uint64_t>();
  c.seed = r.get<std::uint64_t>();
  const auto loss = r.get<std::uint8_t>();
  if (activation != 0 || optimizer > 1 || loss > 1) throw Error(Errc::CorruptPayload, "bad enum tag in configuration");
  c.optimizer = static_cast<OptimizerKind>(optimizer);
  c.loss = static_cast<LossKind>(loss);
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(Errc::CorruptPayload, e.what());
  }
  model.scaling_hash = r.get<std::uint64_t>();
  model.manifest_hash = r.get_string();

  auto& p = model.params;
  auto fan_in = static_cast<Eigen::Index>(c.input_dim);
  for (std::size_t l = 0; l <= c.hidden.size(); ++l) {
    const auto width = l < c.hidden.size() ? static_cast<Eigen::Index>(c.hidden[l]) : 1;
    p.weights.push_back(detail::get_matrix(r, width, fan_in));
    p.biases.push_back(detail::get_vector(r, width));
    fan_in = width;
  }
  if (c.batch_norm) {
    for (auto h : c.hidden) {
      const auto n = static_cast<Eigen::Index>(h);
      p.gamma.push_back(detail::get_vector(r, n));
      p.beta.push_back(detail::get_vector(r, n));
      p.running_mean.push_back(detail::get_vector(r, n));
      p.running_var.push_back(detail::get_vector(r, n));
    }
  }
  p.optimizer.step = r.get<std::uint64_t>();
  const auto slots = r.get<std::uint64_t>();
  const auto views = trainable_views(p);
  if (slots != 0 && slots != views.size()) throw Error(Errc::CorruptPayload, "optimizer state does not match parameters");
  for (std::uint64_t k = 0; k < slots; ++k) {
    const auto n = static_cast<Eigen::Index>(views[k].size());
    p.optimizer.first.push_back(detail::get_vector(r, n));
    p.optimizer.second.push_back(detail::get_vector(r, n));
  }
  if (!r.at_seal()) throw Error(Errc::CorruptPayload, "trailing bytes");
  return model;
}

inline void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_model(model));
}

inline MlpModel load_checkpoint(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

}  // namespace ocon
