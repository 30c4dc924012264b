// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch training of the segmentation network: Adam with a
// reduce-on-plateau learning rate and early stopping on the training loss.
#pragma once

#include "egoseg/network.hpp"
#include "egoseg/point_model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace egoseg {

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 400;
  int early_stop_patience = 10;     // epochs without a new best loss before stopping
  double learning_rate = 1e-3;
  double lr_decay = 0.5;
  int lr_patience = 5;              // stagnant epochs before the learning rate decays
  double improvement_threshold = 1e-4;  // relative loss decrease that counts as progress
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Windows whose last frame has fewer static points than this are down-weighted.
  int low_static_count = 10;
  double low_static_weight = 0.25;
  std::uint64_t seed = 1;
};

void validate(const TrainConfig& config);

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Windows over labeled sequences, with per-frame features compacted to
/// real points and stored once.
class TrainingSet {
 public:
  /// `sequence_weights[i]` scales every window of sequence i; empty means 1.
  TrainingSet(std::span<const Sequence> sequences, std::span<const double> sequence_weights,
              int feature_count, std::size_t window_length, const TrainConfig& config = {});

  std::size_t size() const { return windows_.size(); }
  std::size_t window_length() const { return window_length_; }
  int feature_count() const { return feature_count_; }

  /// Per-feature mean and standard deviation over every stored point.
  const Eigen::VectorXd& feature_mean() const { return mean_; }
  const Eigen::VectorXd& feature_std() const { return std_; }

  double sample_weight(std::size_t window) const { return windows_[window].weight; }

  void append_to(std::size_t window, BatchInput<float>& batch, std::vector<float>& is_static,
                 std::vector<float>& is_moving) const;

 private:
  struct WindowRef {
    std::size_t first_frame;
    double weight;
  };
  int feature_count_;
  std::size_t window_length_;
  std::vector<MatrixX<float>> frames_;
  std::vector<std::vector<PointClass>> labels_;
  std::vector<WindowRef> windows_;
  Eigen::VectorXd mean_, std_;
};

/// Adam on every trainable array; moments live in arrays shaped like the params.
class Adam {
 public:
  Adam(const ModelParams<float>& params, const TrainConfig& config);
  void step(ModelParams<float>& params, const ModelParams<float>& grads, double learning_rate);

 private:
  ModelParams<float> m_, v_;
  double beta1_, beta2_, epsilon_;
  long step_ = 0;
};

/// Halves (by `lr_decay`) after `lr_patience` stagnant epochs and signals a
/// stop after `early_stop_patience` epochs without a new best.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(const TrainConfig& config);

  /// Returns true when `loss` is a new best.
  bool observe(double loss);
  double learning_rate() const { return lr_; }
  bool should_stop() const { return since_best_ >= early_stop_patience_; }
  double best() const { return best_; }

 private:
  double lr_, decay_, threshold_;
  int lr_patience_, early_stop_patience_;
  double best_;
  int since_best_ = 0;
  int since_decay_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;  // rate used during the epoch
};

struct TrainResult {
  ModelParams<float> params;  // parameters after the best epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
  bool stopped_early = false;
};

/// Deterministic given (set, configs). Input normalization statistics are
/// taken from the training set.
TrainResult train(const TrainingSet& set, const ModelConfig& model_config, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace egoseg
