// SPDX-License-Identifier: Apache-2.0
#include "egoseg/network.hpp"

#include "egoseg/errors.hpp"
#include "egoseg/random.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <type_traits>

namespace egoseg {

namespace {

template <typename Scalar>
MatrixX<Scalar> uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  MatrixX<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
BatchNormParams<Scalar> init_bn(Eigen::Index channels) {
  return {MatrixX<Scalar>::Ones(channels, 1), MatrixX<Scalar>::Zero(channels, 1), MatrixX<Scalar>::Zero(channels, 1),
          MatrixX<Scalar>::Ones(channels, 1)};
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return Scalar(1) / (Scalar(1) + (-x).exp());
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

// Clamped binary cross-entropy on a logit and its derivative, evaluated in
// at least double precision.
template <typename Scalar>
using Accum = std::common_type_t<Scalar, double>;

template <typename Scalar>
std::pair<Accum<Scalar>, Scalar> bce_with_logit(Scalar logit, Scalar target) {
  using A = Accum<Scalar>;
  const A eps = static_cast<A>(kLossEpsilon);
  const A log_eps = std::log(eps);
  const A log_1m_eps = std::log1p(-eps);
  const A bound = log_1m_eps - log_eps;
  const A t = target;
  const A a = logit;
  if (a >= bound) return {-t * log_1m_eps - (1 - t) * log_eps, Scalar(0)};
  if (a <= -bound) return {-t * log_eps - (1 - t) * log_1m_eps, Scalar(0)};
  const A log_p = -softplus(-a);
  const A log_q = -softplus(a);
  const A p = 1 / (1 + std::exp(-a));
  return {-t * log_p - (1 - t) * log_q, static_cast<Scalar>(p - t)};
}

template <typename Scalar>
void require_shape(const MatrixX<Scalar>& m, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols)
    throw std::invalid_argument(
        fmt::format("parameter {} has shape {}x{}, expected {}x{}", name, m.rows(), m.cols(), rows, cols));
  if (!m.allFinite()) throw std::invalid_argument(fmt::format("parameter {} is not finite", name));
}

}  // namespace

void validate(const ModelConfig& c) {
  if (c.feature_count != kBaseFeatureCount && c.feature_count != kRcsFeatureCount)
    throw ConfigError("feature_count", "must be 3 or 4");
  for (int w : c.encoder_widths)
    if (w < 1) throw ConfigError("encoder_widths", "widths must be positive");
  for (int w : c.decoder_widths)
    if (w < 1) throw ConfigError("decoder_widths", "widths must be positive");
  for (int w : c.head_widths)
    if (w < 1) throw ConfigError("head_widths", "widths must be positive");
  if (c.head_widths[2] != 1) throw ConfigError("head_widths", "final head width must be 1");
  if (c.gru_hidden < 1) throw ConfigError("gru_hidden", "must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout", "must lie in [0, 1)");
  if (!(c.bn_momentum > 0.0 && c.bn_momentum <= 1.0)) throw ConfigError("bn_momentum", "must lie in (0, 1]");
  if (!(c.bn_epsilon > 0.0)) throw ConfigError("bn_epsilon", "must be positive");
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t count = 0;
  init_params<float>(config, 0).visit_trainable(
      [&](const std::string&, const MatrixX<float>& m) { count += static_cast<std::size_t>(m.size()); });
  return count;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  std::mt19937_64 rng(seed);
  ModelParams<Scalar> p;
  p.config = config;
  p.input_mean = MatrixX<Scalar>::Zero(config.feature_count, 1);
  p.input_std = MatrixX<Scalar>::Ones(config.feature_count, 1);

  int in = config.feature_count;
  for (int i = 0; i < 3; ++i) {
    const int out = config.encoder_widths[static_cast<std::size_t>(i)];
    p.encoder[i] = uniform_matrix<Scalar>(rng, out, in, 1.0 / std::sqrt(in));
    p.encoder_bn[i] = init_bn<Scalar>(out);
    in = out;
  }
  const int h = config.gru_hidden;
  const double gru_bound = 1.0 / std::sqrt(h);
  p.gru_w_ih = uniform_matrix<Scalar>(rng, 3 * h, in, gru_bound);
  p.gru_w_hh = uniform_matrix<Scalar>(rng, 3 * h, h, gru_bound);
  p.gru_b_ih = uniform_matrix<Scalar>(rng, 3 * h, 1, gru_bound);
  p.gru_b_hh = uniform_matrix<Scalar>(rng, 3 * h, 1, gru_bound);

  in = config.skip_width();
  for (int i = 0; i < 3; ++i) {
    const int out = config.decoder_widths[static_cast<std::size_t>(i)];
    p.decoder[i] = uniform_matrix<Scalar>(rng, out, in, 1.0 / std::sqrt(in));
    p.decoder_bn[i] = init_bn<Scalar>(out);
    in = out;
  }
  const int head_in = in;
  for (auto* head : {&p.static_head, &p.moving_head}) {
    in = head_in;
    for (int i = 0; i < 3; ++i) {
      const int out = config.head_widths[static_cast<std::size_t>(i)];
      const double bound = 1.0 / std::sqrt(in);
      (*head)[i].weight = uniform_matrix<Scalar>(rng, out, in, bound);
      (*head)[i].bias = uniform_matrix<Scalar>(rng, out, 1, bound);
      in = out;
    }
  }
  return p;
}

template <typename Scalar>
ModelParams<Scalar> zeros_like(const ModelParams<Scalar>& params) {
  ModelParams<Scalar> g = params;
  g.visit_trainable([](const std::string&, MatrixX<Scalar>& m) { m.setZero(); });
  return g;
}

template <typename Scalar>
void check_params(const ModelParams<Scalar>& p) {
  const ModelConfig& c = p.config;
  validate(c);
  const ModelParams<Scalar> reference = init_params<Scalar>(c, 0);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  reference.visit_trainable([&](const std::string&, const MatrixX<Scalar>& m) { shapes.emplace_back(m.rows(), m.cols()); });
  reference.visit_buffers([&](const std::string&, const MatrixX<Scalar>& m) { shapes.emplace_back(m.rows(), m.cols()); });
  std::size_t i = 0;
  auto check = [&](const std::string& name, const MatrixX<Scalar>& m) {
    require_shape(m, shapes[i].first, shapes[i].second, name);
    ++i;
  };
  p.visit_trainable(check);
  p.visit_buffers(check);
  if ((p.input_std.array() <= Scalar(0)).any()) throw std::invalid_argument("input.std must be positive");
}

// ---------------------------------------------------------------------------
// BatchInput

template <typename Scalar>
BatchInput<Scalar>::BatchInput(Eigen::Index feature_count, Eigen::Index steps)
    : feature_count_(feature_count), steps_(steps) {
  if (steps < 1) throw std::invalid_argument("BatchInput: window length must be at least 1");
}

template <typename Scalar>
void BatchInput<Scalar>::add_window(const FrameWindow& window) {
  if (static_cast<Eigen::Index>(window.length()) != steps_)
    throw std::invalid_argument(fmt::format("window length {} does not match batch length {}", window.length(), steps_));
  if (window.feature_count() != feature_count_)
    throw std::invalid_argument(
        fmt::format("window has {} features, model expects {}", window.feature_count(), feature_count_));
  for (std::size_t t = 0; t < window.length(); ++t) {
    const Eigen::MatrixXd& f = window.features[t];
    Eigen::Index added = 0;
    for (Eigen::Index j = 0; j < window.padded_size(); ++j) {
      if (!window.mask(j, static_cast<Eigen::Index>(t))) continue;
      for (Eigen::Index i = 0; i < feature_count_; ++i) data_.push_back(static_cast<Scalar>(f(i, j)));
      ++added;
    }
    offsets_.push_back(offsets_.back() + added);
  }
  finish_window();
}

template <typename Scalar>
void BatchInput<Scalar>::add_window(std::span<const MatrixX<Scalar>* const> frames) {
  if (static_cast<Eigen::Index>(frames.size()) != steps_)
    throw std::invalid_argument(fmt::format("window length {} does not match batch length {}", frames.size(), steps_));
  for (const MatrixX<Scalar>* f : frames) {
    if (f->rows() != feature_count_)
      throw std::invalid_argument(fmt::format("frame has {} features, model expects {}", f->rows(), feature_count_));
    data_.insert(data_.end(), f->data(), f->data() + f->size());
    offsets_.push_back(offsets_.back() + f->cols());
  }
  finish_window();
}

template <typename Scalar>
void BatchInput<Scalar>::finish_window() {
  ++windows_;
  output_offsets_.push_back(output_offsets_.back() + size(windows_ - 1, steps_ - 1));
}

// ---------------------------------------------------------------------------
// Network

namespace detail {

template <typename Scalar, typename Input>
void norm_forward(const MatrixX<Scalar>& weight, const BatchNormParams<Scalar>& bn, const Input& input,
                  bool training, double epsilon, MatrixX<Scalar>& xhat, MatrixX<Scalar>& out,
                  VectorX<Scalar>& mean, VectorX<Scalar>& var, VectorX<Scalar>& inv_std) {
  xhat.noalias() = weight * input;
  if (training && xhat.cols() > 0) {
    mean = xhat.rowwise().mean();
    xhat.colwise() -= mean;
    var = xhat.array().square().rowwise().mean().matrix();
  } else {
    mean = bn.running_mean.col(0);
    var = bn.running_var.col(0);
    xhat.colwise() -= mean;
  }
  inv_std = (var.array() + static_cast<Scalar>(epsilon)).rsqrt().matrix();
  xhat.array().colwise() *= inv_std.array();
  out = ((xhat.array().colwise() * bn.gamma.col(0).array()).colwise() + bn.beta.col(0).array()).cwiseMax(Scalar(0));
}

// Returns d(loss)/d(input) when `want_input_grad`.
template <typename Scalar, typename Input>
MatrixX<Scalar> norm_backward(const MatrixX<Scalar>& weight, const BatchNormParams<Scalar>& bn,
                              const MatrixX<Scalar>& xhat, const MatrixX<Scalar>& out, const VectorX<Scalar>& inv_std,
                              const Input& input, MatrixX<Scalar> d_out, bool training, MatrixX<Scalar>& d_weight,
                              BatchNormParams<Scalar>& d_bn, bool want_input_grad) {
  d_out.array() *= (out.array() > Scalar(0)).template cast<Scalar>();
  d_bn.gamma.col(0) += (d_out.array() * xhat.array()).rowwise().sum().matrix();
  d_bn.beta.col(0) += d_out.rowwise().sum();
  d_out.array().colwise() *= bn.gamma.col(0).array();  // now d xhat
  if (training && d_out.cols() > 0) {
    const VectorX<Scalar> mean_d = d_out.rowwise().mean();
    const VectorX<Scalar> mean_dx = (d_out.array() * xhat.array()).rowwise().mean().matrix();
    d_out.colwise() -= mean_d;
    d_out.array() -= xhat.array().colwise() * mean_dx.array();
  }
  d_out.array().colwise() *= inv_std.array();  // now d z
  d_weight.noalias() += d_out * input.transpose();
  if (!want_input_grad) return {};
  return weight.transpose() * d_out;
}

}  // namespace detail

template <typename Scalar>
void Network<Scalar>::forward(const ModelParams<Scalar>& params, const BatchInput<Scalar>& batch, Mode mode,
                              std::uint64_t seed) {
  const ModelConfig& cfg = params.config;
  if (batch.feature_count() != cfg.feature_count)
    throw std::invalid_argument(
        fmt::format("batch has {} features, model expects {}", batch.feature_count(), cfg.feature_count));
  batch_ = &batch;
  mode_ = mode;
  const bool training = mode == Mode::kTraining;
  const Eigen::Index B = batch.windows();
  const Eigen::Index T = batch.steps();
  const Eigen::Index M = cfg.feature_count;
  const Eigen::Index H = cfg.gru_hidden;

  inputs_ = ((batch.features().colwise() - params.input_mean.col(0)).array().colwise() / params.input_std.col(0).array())
                .matrix();

  // Encoder.
  for (int l = 0; l < 3; ++l) {
    NormLayer& layer = encoder_[l];
    if (l == 0)
      detail::norm_forward(params.encoder[l], params.encoder_bn[l], inputs_, training, cfg.bn_epsilon, layer.xhat,
                           layer.out, layer.batch_mean, layer.batch_var, layer.inv_std);
    else
      detail::norm_forward(params.encoder[l], params.encoder_bn[l], encoder_[l - 1].out, training, cfg.bn_epsilon,
                           layer.xhat, layer.out, layer.batch_mean, layer.batch_var, layer.inv_std);
  }

  // Masked average pooling, time-major columns (t * B + b).
  const MatrixX<Scalar>& features = encoder_[2].out;
  pooled_.setZero(features.rows(), T * B);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::Index n = batch.size(b, t);
      if (n > 0) pooled_.col(t * B + b) = features.middleCols(batch.offset(b, t), n).rowwise().mean();
    }
  }

  // GRU over frames, zero initial state.
  MatrixX<Scalar> a_ih = params.gru_w_ih * pooled_;
  a_ih.colwise() += params.gru_b_ih.col(0);
  MatrixX<Scalar> h = MatrixX<Scalar>::Zero(H, B);
  gru_.resize(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    GruStep& s = gru_[static_cast<std::size_t>(t)];
    MatrixX<Scalar> a_hh = params.gru_w_hh * h;
    a_hh.colwise() += params.gru_b_hh.col(0);
    const auto x = a_ih.middleCols(t * B, B);
    s.h_prev = h;
    s.r = sigmoid((x.topRows(H) + a_hh.topRows(H)).array()).matrix();
    s.z = sigmoid((x.middleRows(H, H) + a_hh.middleRows(H, H)).array()).matrix();
    s.hh_n = a_hh.bottomRows(H);
    s.n = (x.bottomRows(H).array() + s.r.array() * s.hh_n.array()).tanh().matrix();
    h = ((Scalar(1) - s.z.array()) * s.n.array() + s.z.array() * h.array()).matrix();
  }
  gru_out_ = h;

  // Skip concatenation onto the last frame's points.
  const Eigen::Index C1 = cfg.encoder_widths[0];
  const Eigen::Index C2 = cfg.encoder_widths[1];
  const Eigen::Index Q = batch.total_outputs();
  skip_.resize(cfg.skip_width(), Q);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index n = batch.output_size(b);
    if (n == 0) continue;
    const Eigen::Index src = batch.offset(b, T - 1);
    const Eigen::Index dst = batch.output_offset(b);
    skip_.block(0, dst, M, n) = inputs_.middleCols(src, n);
    skip_.block(M, dst, C1, n) = encoder_[0].out.middleCols(src, n);
    skip_.block(M + C1, dst, C2, n) = encoder_[1].out.middleCols(src, n);
    skip_.block(M + C1 + C2, dst, H, n) = gru_out_.col(b).replicate(1, n);
  }

  // Decoder, dropout after the second layer with one channel mask per window.
  detail::norm_forward(params.decoder[0], params.decoder_bn[0], skip_, training, cfg.bn_epsilon, decoder_[0].xhat,
                       decoder_[0].out, decoder_[0].batch_mean, decoder_[0].batch_var, decoder_[0].inv_std);
  detail::norm_forward(params.decoder[1], params.decoder_bn[1], decoder_[0].out, training, cfg.bn_epsilon,
                       decoder_[1].xhat, decoder_[1].out, decoder_[1].batch_mean, decoder_[1].batch_var,
                       decoder_[1].inv_std);
  dropped_ = decoder_[1].out;
  const Eigen::Index D1 = cfg.decoder_widths[1];
  dropout_mask_.setOnes(D1, B);
  if (training && cfg.dropout > 0.0) {
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - cfg.dropout));
    for (Eigen::Index b = 0; b < B; ++b) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index c = 0; c < D1; ++c) dropout_mask_(c, b) = u(rng) < cfg.dropout ? Scalar(0) : keep_scale;
      const Eigen::Index n = batch.output_size(b);
      if (n > 0) dropped_.middleCols(batch.output_offset(b), n).array().colwise() *= dropout_mask_.col(b).array();
    }
  }
  detail::norm_forward(params.decoder[2], params.decoder_bn[2], dropped_, training, cfg.bn_epsilon, decoder_[2].xhat,
                       decoder_[2].out, decoder_[2].batch_mean, decoder_[2].batch_var, decoder_[2].inv_std);

  // Heads.
  auto run_head = [&](const std::array<DenseParams<Scalar>, 3>& head, HeadCache& cache, RowVectorX<Scalar>& logit) {
    const MatrixX<Scalar>* in = &decoder_[2].out;
    for (int l = 0; l < 2; ++l) {
      MatrixX<Scalar>& a = cache.hidden[static_cast<std::size_t>(l)];
      a.noalias() = head[l].weight * (*in);
      a.colwise() += head[l].bias.col(0);
      a = a.cwiseMax(Scalar(0));
      in = &a;
    }
    MatrixX<Scalar> out = head[2].weight * (*in);
    out.colwise() += head[2].bias.col(0);
    logit = out.row(0);
  };
  run_head(params.static_head, static_cache_, static_logit_);
  run_head(params.moving_head, moving_cache_, moving_logit_);
}

template <typename Scalar>
RowVectorX<Scalar> Network<Scalar>::static_probabilities() const {
  return sigmoid(static_logit_.array()).matrix();
}

template <typename Scalar>
RowVectorX<Scalar> Network<Scalar>::moving_probabilities() const {
  return sigmoid(moving_logit_.array()).matrix();
}

template <typename Scalar>
Scalar Network<Scalar>::loss(const BatchTargets<Scalar>& targets) {
  const BatchInput<Scalar>& batch = *batch_;
  const Eigen::Index B = batch.windows();
  const Eigen::Index Q = batch.total_outputs();
  if (targets.is_static.size() != Q || targets.is_moving.size() != Q ||
      static_cast<Eigen::Index>(targets.sample_weights.size()) != B)
    throw std::invalid_argument("loss: targets do not match the batch");
  d_static_logit_.setZero(Q);
  d_moving_logit_.setZero(Q);
  Accum<Scalar> total = 0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index n = batch.output_size(b);
    if (n == 0) continue;
    const Accum<Scalar> scale = static_cast<Accum<Scalar>>(targets.sample_weights[static_cast<std::size_t>(b)]) /
                                (static_cast<Accum<Scalar>>(B) * static_cast<Accum<Scalar>>(n));
    const Eigen::Index off = batch.output_offset(b);
    Accum<Scalar> window_sum = 0;
    for (Eigen::Index i = off; i < off + n; ++i) {
      const auto [ls, gs] = bce_with_logit(static_logit_(i), targets.is_static(i));
      const auto [lm, gm] = bce_with_logit(moving_logit_(i), targets.is_moving(i));
      window_sum += ls + lm;
      d_static_logit_(i) = static_cast<Scalar>(scale) * gs;
      d_moving_logit_(i) = static_cast<Scalar>(scale) * gm;
    }
    total += scale * window_sum;
  }
  return static_cast<Scalar>(total);
}

template <typename Scalar>
void Network<Scalar>::backward(const ModelParams<Scalar>& params, ModelParams<Scalar>& grads) const {
  const BatchInput<Scalar>& batch = *batch_;
  const ModelConfig& cfg = params.config;
  const bool training = mode_ == Mode::kTraining;
  const Eigen::Index B = batch.windows();
  const Eigen::Index T = batch.steps();
  const Eigen::Index M = cfg.feature_count;
  const Eigen::Index H = cfg.gru_hidden;
  const Eigen::Index C1 = cfg.encoder_widths[0];
  const Eigen::Index C2 = cfg.encoder_widths[1];

  // Heads.
  auto head_backward = [&](const std::array<DenseParams<Scalar>, 3>& head, std::array<DenseParams<Scalar>, 3>& g,
                           const HeadCache& cache, const RowVectorX<Scalar>& d_logit) {
    MatrixX<Scalar> d = d_logit;
    for (int l = 2; l >= 0; --l) {
      const MatrixX<Scalar>& in = l == 0 ? decoder_[2].out : cache.hidden[static_cast<std::size_t>(l - 1)];
      g[l].weight.noalias() += d * in.transpose();
      g[l].bias.col(0) += d.rowwise().sum();
      MatrixX<Scalar> d_in = head[l].weight.transpose() * d;
      if (l > 0) d_in.array() *= (in.array() > Scalar(0)).template cast<Scalar>();
      d = std::move(d_in);
    }
    return d;
  };
  MatrixX<Scalar> d_decoded = head_backward(params.static_head, grads.static_head, static_cache_, d_static_logit_);
  d_decoded += head_backward(params.moving_head, grads.moving_head, moving_cache_, d_moving_logit_);

  // Decoder.
  MatrixX<Scalar> d = detail::norm_backward(params.decoder[2], params.decoder_bn[2], decoder_[2].xhat, decoder_[2].out,
                                            decoder_[2].inv_std, dropped_, std::move(d_decoded), training,
                                            grads.decoder[2], grads.decoder_bn[2], true);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index n = batch.output_size(b);
    if (n > 0) d.middleCols(batch.output_offset(b), n).array().colwise() *= dropout_mask_.col(b).array();
  }
  d = detail::norm_backward(params.decoder[1], params.decoder_bn[1], decoder_[1].xhat, decoder_[1].out,
                            decoder_[1].inv_std, decoder_[0].out, std::move(d), training, grads.decoder[1],
                            grads.decoder_bn[1], true);
  const MatrixX<Scalar> d_skip = detail::norm_backward(params.decoder[0], params.decoder_bn[0], decoder_[0].xhat,
                                                       decoder_[0].out, decoder_[0].inv_std, skip_, std::move(d),
                                                       training, grads.decoder[0], grads.decoder_bn[0], true);

  // GRU state gradient: sum over each window's points.
  MatrixX<Scalar> dh = MatrixX<Scalar>::Zero(H, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index n = batch.output_size(b);
    if (n > 0) dh.col(b) = d_skip.block(M + C1 + C2, batch.output_offset(b), H, n).rowwise().sum();
  }

  // Backpropagation through time.
  MatrixX<Scalar> d_a_ih(3 * H, T * B);
  MatrixX<Scalar> d_a_hh(3 * H, B);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const GruStep& s = gru_[static_cast<std::size_t>(t)];
    const auto z = s.z.array();
    const auto n = s.n.array();
    const auto r = s.r.array();
    const auto dh_a = dh.array();
    const MatrixX<Scalar> da_n = (dh_a * (Scalar(1) - z) * (Scalar(1) - n.square())).matrix();
    const MatrixX<Scalar> da_z = (dh_a * (s.h_prev.array() - n) * z * (Scalar(1) - z)).matrix();
    const MatrixX<Scalar> da_r = (da_n.array() * s.hh_n.array() * r * (Scalar(1) - r)).matrix();
    auto block = d_a_ih.middleCols(t * B, B);
    block.topRows(H) = da_r;
    block.middleRows(H, H) = da_z;
    block.bottomRows(H) = da_n;
    d_a_hh.topRows(H) = da_r;
    d_a_hh.middleRows(H, H) = da_z;
    d_a_hh.bottomRows(H) = (da_n.array() * r).matrix();
    grads.gru_w_hh.noalias() += d_a_hh * s.h_prev.transpose();
    grads.gru_b_hh.col(0) += d_a_hh.rowwise().sum();
    MatrixX<Scalar> dh_prev = (dh_a * z).matrix();
    dh_prev.noalias() += params.gru_w_hh.transpose() * d_a_hh;
    dh = std::move(dh_prev);
  }
  grads.gru_w_ih.noalias() += d_a_ih * pooled_.transpose();
  grads.gru_b_ih.col(0) += d_a_ih.rowwise().sum();
  const MatrixX<Scalar> d_pooled = params.gru_w_ih.transpose() * d_a_ih;

  // Pooling.
  MatrixX<Scalar> d_enc = MatrixX<Scalar>::Zero(encoder_[2].out.rows(), batch.total_points());
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::Index n = batch.size(b, t);
      if (n > 0)
        d_enc.middleCols(batch.offset(b, t), n).colwise() = d_pooled.col(t * B + b) / static_cast<Scalar>(n);
    }
  }

  // Encoder, adding the skip-connection gradients of layers 1 and 2.
  auto add_skip = [&](MatrixX<Scalar>& target, Eigen::Index row0, Eigen::Index rows) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::Index n = batch.output_size(b);
      if (n > 0) target.middleCols(batch.offset(b, T - 1), n) += d_skip.block(row0, batch.output_offset(b), rows, n);
    }
  };
  d_enc = detail::norm_backward(params.encoder[2], params.encoder_bn[2], encoder_[2].xhat, encoder_[2].out,
                                encoder_[2].inv_std, encoder_[1].out, std::move(d_enc), training, grads.encoder[2],
                                grads.encoder_bn[2], true);
  add_skip(d_enc, M + C1, C2);
  d_enc = detail::norm_backward(params.encoder[1], params.encoder_bn[1], encoder_[1].xhat, encoder_[1].out,
                                encoder_[1].inv_std, encoder_[0].out, std::move(d_enc), training, grads.encoder[1],
                                grads.encoder_bn[1], true);
  add_skip(d_enc, M, C1);
  detail::norm_backward(params.encoder[0], params.encoder_bn[0], encoder_[0].xhat, encoder_[0].out,
                        encoder_[0].inv_std, inputs_, std::move(d_enc), training, grads.encoder[0],
                        grads.encoder_bn[0], false);
}

template <typename Scalar>
void Network<Scalar>::update_running_stats(ModelParams<Scalar>& params) const {
  if (mode_ != Mode::kTraining) return;
  const auto m = static_cast<Scalar>(params.config.bn_momentum);
  auto update = [m](BatchNormParams<Scalar>& bn, const NormLayer& layer, Eigen::Index count) {
    if (count < 2) return;
    const Scalar unbias = static_cast<Scalar>(count) / static_cast<Scalar>(count - 1);
    bn.running_mean.col(0) = (Scalar(1) - m) * bn.running_mean.col(0) + m * layer.batch_mean;
    bn.running_var.col(0) = (Scalar(1) - m) * bn.running_var.col(0) + (m * unbias) * layer.batch_var;
  };
  for (int l = 0; l < 3; ++l) {
    update(params.encoder_bn[l], encoder_[l], batch_->total_points());
    update(params.decoder_bn[l], decoder_[l], batch_->total_outputs());
  }
}

// ---------------------------------------------------------------------------
// Free functions

template <typename Scalar>
HeadOutputs forward(const FrameWindow& window, const ModelParams<Scalar>& params, bool training, std::uint64_t seed) {
  BatchInput<Scalar> batch(params.config.feature_count, static_cast<Eigen::Index>(window.length()));
  batch.add_window(window);
  Network<Scalar> net;
  net.forward(params, batch, training ? Mode::kTraining : Mode::kInference, seed);
  return {net.static_probabilities().transpose().template cast<double>(),
          net.moving_probabilities().transpose().template cast<double>()};
}

double loss(const Eigen::Ref<const Eigen::VectorXd>& static_ini, const Eigen::Ref<const Eigen::VectorXd>& moving_ini,
            const GroundTruthLabels& gt, double sample_weight) {
  const Eigen::Index n = static_ini.size();
  if (moving_ini.size() != n || static_cast<Eigen::Index>(gt.classes.size()) != n)
    throw std::invalid_argument("loss: prediction and label counts differ");
  if (n == 0) return 0.0;
  auto bce = [](double p, double t) {
    const double pc = std::clamp(p, kLossEpsilon, 1.0 - kLossEpsilon);
    return -t * std::log(pc) - (1.0 - t) * std::log1p(-pc);
  };
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const PointClass c = gt.classes[static_cast<std::size_t>(i)];
    sum += bce(static_ini(i), c == PointClass::kStatic ? 1.0 : 0.0);
    sum += bce(moving_ini(i), c == PointClass::kMoving ? 1.0 : 0.0);
  }
  return sample_weight * sum / static_cast<double>(n);
}

template <typename Scalar>
BatchTargets<Scalar> make_targets(std::span<const GroundTruthLabels* const> labels,
                                  std::span<const double> sample_weights) {
  if (labels.size() != sample_weights.size()) throw std::invalid_argument("make_targets: size mismatch");
  std::size_t total = 0;
  for (const GroundTruthLabels* l : labels) total += l->classes.size();
  BatchTargets<Scalar> t;
  t.is_static.resize(static_cast<Eigen::Index>(total));
  t.is_moving.resize(static_cast<Eigen::Index>(total));
  Eigen::Index i = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    for (PointClass c : labels[b]->classes) {
      t.is_static(i) = c == PointClass::kStatic ? Scalar(1) : Scalar(0);
      t.is_moving(i) = c == PointClass::kMoving ? Scalar(1) : Scalar(0);
      ++i;
    }
    t.sample_weights.push_back(static_cast<Scalar>(sample_weights[b]));
  }
  return t;
}

template <typename Scalar>
GradientResult<Scalar> gradients(const ModelParams<Scalar>& params, std::span<const Example> batch,
                                 std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  BatchInput<Scalar> input(params.config.feature_count, static_cast<Eigen::Index>(batch.front().window.length()));
  std::vector<const GroundTruthLabels*> labels;
  std::vector<double> weights;
  for (const Example& ex : batch) {
    input.add_window(ex.window);
    const Eigen::Index n = input.output_size(input.windows() - 1);
    if (static_cast<Eigen::Index>(ex.gt.classes.size()) != n)
      throw std::invalid_argument("gradients: labels do not match the window's last frame");
    labels.push_back(&ex.gt);
    weights.push_back(ex.sample_weight);
  }
  Network<Scalar> net;
  net.forward(params, input, Mode::kTraining, seed);
  GradientResult<Scalar> result{net.loss(make_targets<Scalar>(labels, weights)), zeros_like(params)};
  net.backward(params, result.grads);
  return result;
}

#define EGOSEG_INSTANTIATE(S)                                                                                   \
  template ModelParams<S> init_params<S>(const ModelConfig&, std::uint64_t);                                  \
  template ModelParams<S> zeros_like<S>(const ModelParams<S>&);                                               \
  template void check_params<S>(const ModelParams<S>&);                                                       \
  template class BatchInput<S>;                                                                                \
  template class Network<S>;                                                                                   \
  template HeadOutputs forward<S>(const FrameWindow&, const ModelParams<S>&, bool, std::uint64_t);            \
  template BatchTargets<S> make_targets<S>(std::span<const GroundTruthLabels* const>, std::span<const double>); \
  template GradientResult<S> gradients<S>(const ModelParams<S>&, std::span<const Example>, std::uint64_t);

EGOSEG_INSTANTIATE(float)
EGOSEG_INSTANTIATE(double)
EGOSEG_INSTANTIATE(long double)

#undef EGOSEG_INSTANTIATE

}  // namespace egoseg
