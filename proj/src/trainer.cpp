// SPDX-License-Identifier: Apache-2.0
#include "egoseg/trainer.hpp"

#include "egoseg/errors.hpp"
#include "egoseg/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace egoseg {

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("batch_size", "must be positive");
  if (c.max_epochs < 1) throw ConfigError("max_epochs", "must be positive");
  if (c.early_stop_patience < 1) throw ConfigError("early_stop_patience", "must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
  if (!(c.lr_decay > 0.0 && c.lr_decay < 1.0)) throw ConfigError("lr_decay", "must lie in (0, 1)");
  if (c.lr_patience < 1) throw ConfigError("lr_patience", "must be positive");
  if (!(c.improvement_threshold >= 0.0)) throw ConfigError("improvement_threshold", "must be nonnegative");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) throw ConfigError("adam_beta1", "must lie in [0, 1)");
  if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) throw ConfigError("adam_beta2", "must lie in [0, 1)");
  if (!(c.adam_epsilon > 0.0)) throw ConfigError("adam_epsilon", "must be positive");
  if (c.low_static_count < 0) throw ConfigError("low_static_count", "must be nonnegative");
  if (!(c.low_static_weight >= 0.0)) throw ConfigError("low_static_weight", "must be nonnegative");
}

TrainingSet::TrainingSet(std::span<const Sequence> sequences, std::span<const double> sequence_weights,
                         int feature_count, std::size_t window_length, const TrainConfig& config)
    : feature_count_(feature_count), window_length_(window_length) {
  if (window_length < 1) throw std::invalid_argument("TrainingSet: window length must be at least 1");
  if (!sequence_weights.empty() && sequence_weights.size() != sequences.size())
    throw std::invalid_argument("TrainingSet: one weight per sequence required");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(feature_count);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(feature_count);
  std::size_t points = 0;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const Sequence& seq = sequences[s];
    const double seq_weight = sequence_weights.empty() ? 1.0 : sequence_weights[s];
    if (!(seq_weight >= 0.0)) throw std::invalid_argument("TrainingSet: sample weights must be nonnegative");
    const std::size_t base = frames_.size();
    for (std::size_t k = 0; k < seq.size(); ++k) {
      const RadarFrame& f = seq[k];
      if (!f.gt) throw std::invalid_argument(fmt::format("TrainingSet: sequence {} frame {} has no labels", s, k));
      if (k > 0 && !(f.timestamp > seq[k - 1].timestamp))
        throw std::invalid_argument(fmt::format("TrainingSet: sequence {} is not chronological", s));
      const Eigen::MatrixXd features = point_features(f, feature_count);
      sum += features.rowwise().sum();
      sum_sq += features.array().square().rowwise().sum().matrix();
      points += f.size();
      frames_.push_back(features.cast<float>());
      labels_.push_back(f.gt->classes);
    }
    for (std::size_t end = window_length - 1; end < seq.size(); ++end) {
      const auto& classes = seq[end].gt->classes;
      const auto statics = std::count(classes.begin(), classes.end(), PointClass::kStatic);
      const double heuristic = statics < config.low_static_count ? config.low_static_weight : 1.0;
      windows_.push_back({base + end + 1 - window_length, seq_weight * heuristic});
    }
  }
  if (windows_.empty()) throw std::invalid_argument("TrainingSet: no complete window in the dataset");
  mean_ = Eigen::VectorXd::Zero(feature_count);
  std_ = Eigen::VectorXd::Ones(feature_count);
  if (points > 0) {
    const double n = static_cast<double>(points);
    mean_ = sum / n;
    const Eigen::VectorXd var = (sum_sq / n - mean_.cwiseAbs2()).cwiseMax(0.0);
    std_ = var.cwiseSqrt().unaryExpr([](double v) { return v > 1e-6 ? v : 1.0; });
  }
}

void TrainingSet::append_to(std::size_t window, BatchInput<float>& batch, std::vector<float>& is_static,
                            std::vector<float>& is_moving) const {
  const WindowRef& ref = windows_.at(window);
  std::vector<const MatrixX<float>*> frames;
  for (std::size_t t = 0; t < window_length_; ++t) frames.push_back(&frames_[ref.first_frame + t]);
  batch.add_window(std::span<const MatrixX<float>* const>(frames));
  for (PointClass c : labels_[ref.first_frame + window_length_ - 1]) {
    is_static.push_back(c == PointClass::kStatic ? 1.0f : 0.0f);
    is_moving.push_back(c == PointClass::kMoving ? 1.0f : 0.0f);
  }
}

Adam::Adam(const ModelParams<float>& params, const TrainConfig& config)
    : m_(zeros_like(params)),
      v_(zeros_like(params)),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      epsilon_(config.adam_epsilon) {}

void Adam::step(ModelParams<float>& params, const ModelParams<float>& grads, double learning_rate) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  const auto lr = static_cast<float>(learning_rate / c1);
  const auto root_c2 = static_cast<float>(std::sqrt(c2));
  const auto eps = static_cast<float>(epsilon_);

  std::vector<MatrixX<float>*> p, m, v;
  std::vector<const MatrixX<float>*> g;
  params.visit_trainable([&](const std::string&, MatrixX<float>& a) { p.push_back(&a); });
  m_.visit_trainable([&](const std::string&, MatrixX<float>& a) { m.push_back(&a); });
  v_.visit_trainable([&](const std::string&, MatrixX<float>& a) { v.push_back(&a); });
  grads.visit_trainable([&](const std::string&, const MatrixX<float>& a) { g.push_back(&a); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = b1 * m[i]->array() + (1.0f - b1) * g[i]->array();
    v[i]->array() = b2 * v[i]->array() + (1.0f - b2) * g[i]->array().square();
    p[i]->array() -= lr * m[i]->array() / (v[i]->array().sqrt() / root_c2 + eps);
  }
}

PlateauSchedule::PlateauSchedule(const TrainConfig& config)
    : lr_(config.learning_rate),
      decay_(config.lr_decay),
      threshold_(config.improvement_threshold),
      lr_patience_(config.lr_patience),
      early_stop_patience_(config.early_stop_patience),
      best_(std::numeric_limits<double>::infinity()) {}

bool PlateauSchedule::observe(double loss) {
  if (loss < best_ - threshold_ * std::abs(best_) || !std::isfinite(best_)) {
    best_ = loss;
    since_best_ = 0;
    since_decay_ = 0;
    return true;
  }
  ++since_best_;
  if (++since_decay_ >= lr_patience_) {
    lr_ *= decay_;
    since_decay_ = 0;
  }
  return false;
}

TrainResult train(const TrainingSet& set, const ModelConfig& model_config, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  validate(config);
  if (set.feature_count() != model_config.feature_count)
    throw std::invalid_argument(fmt::format("train: dataset has {} features, model expects {}", set.feature_count(),
                                            model_config.feature_count));
  TrainResult result;
  ModelParams<float> params = init_params<float>(model_config, derive_seed(config.seed, 0));
  params.input_mean = set.feature_mean().cast<float>();
  params.input_std = set.feature_std().cast<float>();
  result.params = params;

  Adam adam(params, config);
  PlateauSchedule schedule(config);
  ModelParams<float> grads = zeros_like(params);
  Network<float> net;
  std::vector<std::size_t> order(set.size());
  std::vector<float> is_static, is_moving;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = schedule.learning_rate();
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 2 * static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double weighted_loss = 0.0;
    for (std::size_t start = 0, index = 0; start < order.size(); start += batch_size, ++index) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      BatchInput<float> batch(set.feature_count(), static_cast<Eigen::Index>(set.window_length()));
      BatchTargets<float> targets;
      is_static.clear();
      is_moving.clear();
      for (std::size_t i = start; i < stop; ++i) {
        set.append_to(order[i], batch, is_static, is_moving);
        targets.sample_weights.push_back(static_cast<float>(set.sample_weight(order[i])));
      }
      targets.is_static = Eigen::Map<RowVectorX<float>>(is_static.data(), static_cast<Eigen::Index>(is_static.size()));
      targets.is_moving = Eigen::Map<RowVectorX<float>>(is_moving.data(), static_cast<Eigen::Index>(is_moving.size()));

      const std::uint64_t dropout_seed =
          derive_seed(derive_seed(config.seed, 2 * static_cast<std::uint64_t>(epoch) + 1), index);
      net.forward(params, batch, Mode::kTraining, dropout_seed);
      const double loss = net.loss(targets);
      if (!std::isfinite(loss))
        throw TrainingDivergedError(
            fmt::format("training diverged: loss {} at epoch {}, batch {} (learning rate {})", loss, epoch, index, lr));
      grads.visit_trainable([](const std::string&, MatrixX<float>& m) { m.setZero(); });
      net.backward(params, grads);
      net.update_running_stats(params);
      adam.step(params, grads, lr);
      weighted_loss += loss * static_cast<double>(stop - start);
    }

    const EpochLog entry{epoch, weighted_loss / static_cast<double>(order.size()), lr};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (schedule.observe(entry.loss)) {
      result.params = params;
      result.best_epoch = epoch;
    }
    if (schedule.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace egoseg
