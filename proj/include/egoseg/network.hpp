// SPDX-License-Identifier: Apache-2.0
//
// Point-cloud segmentation network: a shared pointwise MLP encoder with
// masked average pooling per frame, a GRU over the pooled frame vectors, a
// pointwise decoder over the last frame (raw features, encoder layers 1-2 and
// the GRU state concatenated onto each point) and two sigmoid heads giving
// per-point static and moving weights.
//
// All arrays are column-per-point. The network is templated on the scalar
// type; float is used for training, double for gradient checking.
#pragma once

#include "egoseg/point_model.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace egoseg {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

struct ModelConfig {
  int feature_count = kRcsFeatureCount;
  std::array<int, 3> encoder_widths{32, 64, 128};
  int gru_hidden = 128;
  std::array<int, 3> decoder_widths{128, 64, 32};
  std::array<int, 3> head_widths{32, 16, 1};
  double dropout = 0.3;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  /// Width of the per-point decoder input.
  int skip_width() const { return feature_count + encoder_widths[0] + encoder_widths[1] + gru_hidden; }
  bool operator==(const ModelConfig&) const = default;
};

/// Throws ConfigError naming the offending field.
void validate(const ModelConfig& config);

/// Number of trainable scalars (weights, biases, normalization scales and shifts).
std::size_t parameter_count(const ModelConfig& config);

template <typename Scalar>
struct BatchNormParams {
  MatrixX<Scalar> gamma, beta;                 // trainable, C x 1
  MatrixX<Scalar> running_mean, running_var;   // buffers, C x 1
};

template <typename Scalar>
struct DenseParams {
  MatrixX<Scalar> weight;  // out x in
  MatrixX<Scalar> bias;    // out x 1
};

/// Every array of the model. Pointwise layers followed by batch
/// normalization carry no bias. Also used as the gradient container.
template <typename Scalar>
struct ModelParams {
  ModelConfig config;
  MatrixX<Scalar> input_mean, input_std;  // feature normalization, M x 1

  std::array<MatrixX<Scalar>, 3> encoder;
  std::array<BatchNormParams<Scalar>, 3> encoder_bn;
  MatrixX<Scalar> gru_w_ih, gru_w_hh;  // 3H x in, 3H x H; gate rows ordered r, z, n
  MatrixX<Scalar> gru_b_ih, gru_b_hh;  // 3H x 1
  std::array<MatrixX<Scalar>, 3> decoder;
  std::array<BatchNormParams<Scalar>, 3> decoder_bn;
  std::array<DenseParams<Scalar>, 3> static_head;
  std::array<DenseParams<Scalar>, 3> moving_head;

  template <typename F>
  void visit_trainable(F&& f) {
    visit_trainable_impl(*this, f);
  }
  template <typename F>
  void visit_trainable(F&& f) const {
    visit_trainable_impl(*this, f);
  }
  template <typename F>
  void visit_buffers(F&& f) {
    visit_buffers_impl(*this, f);
  }
  template <typename F>
  void visit_buffers(F&& f) const {
    visit_buffers_impl(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_trainable_impl(Self& p, F& f) {
    for (int i = 0; i < 3; ++i) {
      const std::string l = std::to_string(i);
      f("encoder." + l + ".weight", p.encoder[i]);
      f("encoder." + l + ".bn.gamma", p.encoder_bn[i].gamma);
      f("encoder." + l + ".bn.beta", p.encoder_bn[i].beta);
    }
    f("gru.w_ih", p.gru_w_ih);
    f("gru.w_hh", p.gru_w_hh);
    f("gru.b_ih", p.gru_b_ih);
    f("gru.b_hh", p.gru_b_hh);
    for (int i = 0; i < 3; ++i) {
      const std::string l = std::to_string(i);
      f("decoder." + l + ".weight", p.decoder[i]);
      f("decoder." + l + ".bn.gamma", p.decoder_bn[i].gamma);
      f("decoder." + l + ".bn.beta", p.decoder_bn[i].beta);
    }
    for (int i = 0; i < 3; ++i) {
      const std::string l = std::to_string(i);
      f("static_head." + l + ".weight", p.static_head[i].weight);
      f("static_head." + l + ".bias", p.static_head[i].bias);
    }
    for (int i = 0; i < 3; ++i) {
      const std::string l = std::to_string(i);
      f("moving_head." + l + ".weight", p.moving_head[i].weight);
      f("moving_head." + l + ".bias", p.moving_head[i].bias);
    }
  }

  template <typename Self, typename F>
  static void visit_buffers_impl(Self& p, F& f) {
    f("input.mean", p.input_mean);
    f("input.std", p.input_std);
    for (int i = 0; i < 3; ++i) {
      const std::string l = std::to_string(i);
      f("encoder." + l + ".bn.running_mean", p.encoder_bn[i].running_mean);
      f("encoder." + l + ".bn.running_var", p.encoder_bn[i].running_var);
    }
    for (int i = 0; i < 3; ++i) {
      const std::string l = std::to_string(i);
      f("decoder." + l + ".bn.running_mean", p.decoder_bn[i].running_mean);
      f("decoder." + l + ".bn.running_var", p.decoder_bn[i].running_var);
    }
  }
};

/// Uniform(+-1/sqrt(fan_in)) weights, unit normalization scales, identity
/// input normalization.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& config, std::uint64_t seed);

/// Same shapes, all trainable arrays zero; buffers copied.
template <typename Scalar>
ModelParams<Scalar> zeros_like(const ModelParams<Scalar>& params);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params) {
  ModelParams<To> out;
  out.config = params.config;
  out.input_mean = params.input_mean.template cast<To>();
  out.input_std = params.input_std.template cast<To>();
  auto cast_bn = [](const BatchNormParams<From>& b) {
    return BatchNormParams<To>{b.gamma.template cast<To>(), b.beta.template cast<To>(),
                               b.running_mean.template cast<To>(), b.running_var.template cast<To>()};
  };
  auto cast_dense = [](const DenseParams<From>& d) {
    return DenseParams<To>{d.weight.template cast<To>(), d.bias.template cast<To>()};
  };
  for (int i = 0; i < 3; ++i) {
    out.encoder[i] = params.encoder[i].template cast<To>();
    out.encoder_bn[i] = cast_bn(params.encoder_bn[i]);
    out.decoder[i] = params.decoder[i].template cast<To>();
    out.decoder_bn[i] = cast_bn(params.decoder_bn[i]);
    out.static_head[i] = cast_dense(params.static_head[i]);
    out.moving_head[i] = cast_dense(params.moving_head[i]);
  }
  out.gru_w_ih = params.gru_w_ih.template cast<To>();
  out.gru_w_hh = params.gru_w_hh.template cast<To>();
  out.gru_b_ih = params.gru_b_ih.template cast<To>();
  out.gru_b_hh = params.gru_b_hh.template cast<To>();
  return out;
}

/// Throws std::invalid_argument if shapes disagree with the config or any
/// array holds a non-finite value.
template <typename Scalar>
void check_params(const ModelParams<Scalar>& params);

/// A batch of windows with the real points of every frame packed side by
/// side. Frame t of window b occupies columns [offset(b, t), offset(b, t) + size(b, t)).
template <typename Scalar>
class BatchInput {
 public:
  BatchInput(Eigen::Index feature_count, Eigen::Index steps);

  /// Gathers the valid (masked) points of every frame.
  void add_window(const FrameWindow& window);
  /// Frames already compacted to real points, `feature_count x n_t` each.
  void add_window(std::span<const MatrixX<Scalar>* const> frames);

  Eigen::Index windows() const { return windows_; }
  Eigen::Index steps() const { return steps_; }
  Eigen::Index feature_count() const { return feature_count_; }
  Eigen::Index total_points() const { return offsets_.back(); }
  Eigen::Index offset(Eigen::Index b, Eigen::Index t) const { return offsets_[static_cast<std::size_t>(b * steps_ + t)]; }
  Eigen::Index size(Eigen::Index b, Eigen::Index t) const {
    const auto i = static_cast<std::size_t>(b * steps_ + t);
    return offsets_[i + 1] - offsets_[i];
  }
  /// Columns of the last frames, packed in window order.
  Eigen::Index output_offset(Eigen::Index b) const { return output_offsets_[static_cast<std::size_t>(b)]; }
  Eigen::Index output_size(Eigen::Index b) const { return size(b, steps_ - 1); }
  Eigen::Index total_outputs() const { return output_offsets_.back(); }
  Eigen::Map<const MatrixX<Scalar>> features() const {
    return {data_.data(), feature_count_, total_points()};
  }

 private:
  void finish_window();

  Eigen::Index feature_count_;
  Eigen::Index steps_;
  Eigen::Index windows_ = 0;
  std::vector<Scalar> data_;  // column-major, feature_count_ x total_points()
  std::vector<Eigen::Index> offsets_{0};
  std::vector<Eigen::Index> output_offsets_{0};
};

enum class Mode { kTraining, kInference };

/// Per-point supervision of the last frame of each window plus a weight per window.
template <typename Scalar>
struct BatchTargets {
  RowVectorX<Scalar> is_static;  // 1 x total_outputs
  RowVectorX<Scalar> is_moving;
  std::vector<Scalar> sample_weights;  // one per window
};

/// Forward/backward engine holding the activations of the last forward pass.
template <typename Scalar>
class Network {
 public:
  /// Runs the network; in training mode batch statistics and the
  /// per-window dropout masks (drawn from `seed`) are used.
  void forward(const ModelParams<Scalar>& params, const BatchInput<Scalar>& batch, Mode mode,
               std::uint64_t seed = 0);

  const RowVectorX<Scalar>& static_logits() const { return static_logit_; }
  const RowVectorX<Scalar>& moving_logits() const { return moving_logit_; }
  RowVectorX<Scalar> static_probabilities() const;
  RowVectorX<Scalar> moving_probabilities() const;

  /// Mean over windows of sample_weight * (BCE_static + BCE_moving) averaged
  /// over each window's points; also stores d(loss)/d(logits) for backward().
  Scalar loss(const BatchTargets<Scalar>& targets);

  /// Accumulates gradients of the last loss() into `grads` (zeroed by caller).
  void backward(const ModelParams<Scalar>& params, ModelParams<Scalar>& grads) const;

  /// Exponential moving average of the last training batch statistics.
  void update_running_stats(ModelParams<Scalar>& params) const;

 private:
  struct NormLayer {
    MatrixX<Scalar> xhat;        // normalized pre-activation
    MatrixX<Scalar> out;         // post-ReLU activation
    VectorX<Scalar> batch_mean, batch_var, inv_std;
  };
  struct GruStep {
    MatrixX<Scalar> h_prev, r, z, n, hh_n;
  };
  struct HeadCache {
    std::array<MatrixX<Scalar>, 2> hidden;  // post-ReLU
  };

  const BatchInput<Scalar>* batch_ = nullptr;
  Mode mode_ = Mode::kInference;
  MatrixX<Scalar> inputs_;                 // normalized features
  std::array<NormLayer, 3> encoder_;
  MatrixX<Scalar> pooled_;                 // C3 x (T * B), time-major
  std::vector<GruStep> gru_;
  MatrixX<Scalar> gru_out_;                // H x B
  MatrixX<Scalar> skip_;                   // decoder input
  std::array<NormLayer, 3> decoder_;
  MatrixX<Scalar> dropout_mask_;           // C_dec1 x B, scaled keep mask
  MatrixX<Scalar> dropped_;                // decoder layer 1 output after dropout
  HeadCache static_cache_, moving_cache_;
  RowVectorX<Scalar> static_logit_, moving_logit_;
  RowVectorX<Scalar> d_static_logit_, d_moving_logit_;
};

/// Per-point outputs for the last frame of a window, in mask order.
struct HeadOutputs {
  Eigen::VectorXd static_ini;
  Eigen::VectorXd moving_ini;
};

template <typename Scalar>
HeadOutputs forward(const FrameWindow& window, const ModelParams<Scalar>& params, bool training,
                    std::uint64_t seed = 0);

inline constexpr double kLossEpsilon = 1e-7;

/// sample_weight * (BCE(static) + BCE(moving)) averaged over points, with
/// predictions clamped to [eps, 1 - eps].
double loss(const Eigen::Ref<const Eigen::VectorXd>& static_ini, const Eigen::Ref<const Eigen::VectorXd>& moving_ini,
            const GroundTruthLabels& gt, double sample_weight);

struct Example {
  FrameWindow window;
  GroundTruthLabels gt;  // labels of the last frame
  double sample_weight = 1.0;
};

template <typename Scalar>
struct GradientResult {
  Scalar loss{0};
  ModelParams<Scalar> grads;
};

/// Exact gradients (backpropagation through time) of the batch loss in
/// training mode. Ego-motion is not part of the loss.
template <typename Scalar>
GradientResult<Scalar> gradients(const ModelParams<Scalar>& params, std::span<const Example> batch,
                                 std::uint64_t seed);

/// Builds BatchTargets from labels; `labels[b]` covers window b's last frame.
template <typename Scalar>
BatchTargets<Scalar> make_targets(std::span<const GroundTruthLabels* const> labels,
                                  std::span<const double> sample_weights);

}  // namespace egoseg
