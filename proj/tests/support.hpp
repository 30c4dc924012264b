// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit and acceptance tests.
#pragma once

#include "egoseg/network.hpp"
#include "egoseg/point_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace egoseg::testing {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.encoder_widths = {4, 4, 4};
  c.gru_hidden = 8;
  c.decoder_widths = {4, 4, 4};
  c.head_widths = {4, 4, 1};
  return c;
}

/// Random frame with `n` points, random labels and RCS.
inline RadarFrame random_frame(std::mt19937_64& rng, std::size_t n, double timestamp) {
  std::uniform_real_distribution<double> range(1.0, 50.0);
  std::uniform_real_distribution<double> az(-1.0, 1.0);
  std::uniform_real_distribution<double> vr(-15.0, 5.0);
  std::normal_distribution<double> rcs(0.0, 6.0);
  std::uniform_int_distribution<int> cls(0, 2);
  RadarFrame f;
  f.timestamp = timestamp;
  f.sensor_id = 1;
  GroundTruthLabels gt;
  for (std::size_t i = 0; i < n; ++i) {
    f.points.push_back({range(rng), az(rng), vr(rng), rcs(rng)});
    const auto c = static_cast<PointClass>(cls(rng));
    gt.classes.push_back(c);
    gt.instances.push_back(c == PointClass::kMoving ? std::optional<std::int64_t>(7) : std::nullopt);
  }
  f.gt = gt;
  return f;
}

inline Sequence random_sequence(std::mt19937_64& rng, std::size_t frames, std::size_t min_points,
                                std::size_t max_points) {
  std::uniform_int_distribution<std::size_t> count(min_points, max_points);
  Sequence s;
  for (std::size_t t = 0; t < frames; ++t) s.push_back(random_frame(rng, count(rng), 0.06 * static_cast<double>(t)));
  return s;
}

/// Loss of a training-mode pass, used as the finite-difference objective.
template <typename Scalar>
Scalar batch_loss(const ModelParams<Scalar>& params, std::span<const Example> batch, std::uint64_t seed) {
  BatchInput<Scalar> input(params.config.feature_count, static_cast<Eigen::Index>(batch.front().window.length()));
  std::vector<const GroundTruthLabels*> labels;
  std::vector<double> weights;
  for (const Example& ex : batch) {
    input.add_window(ex.window);
    labels.push_back(&ex.gt);
    weights.push_back(ex.sample_weight);
  }
  Network<Scalar> net;
  net.forward(params, input, Mode::kTraining, seed);
  return net.loss(make_targets<Scalar>(labels, weights));
}

/// Every trainable and buffer value in visiting order, for exact comparisons.
template <typename Scalar>
std::vector<double> flatten(const ModelParams<Scalar>& params) {
  std::vector<double> out;
  auto push = [&](const std::string&, const auto& array) {
    for (Eigen::Index i = 0; i < array.size(); ++i) out.push_back(static_cast<double>(array.data()[i]));
  };
  params.visit_trainable(push);
  params.visit_buffers(push);
  return out;
}

/// Windows of 4 to 6 random points over 3 frames, sample weights 0.5, 1.5, ...
inline std::vector<Example> tiny_batch(std::uint64_t seed, std::size_t windows = 2) {
  std::mt19937_64 rng(seed);
  std::vector<Example> batch;
  for (std::size_t b = 0; b < windows; ++b) {
    const Sequence seq = random_sequence(rng, 3, 4, 6);
    batch.push_back({make_window(seq, kRcsFeatureCount), *seq.back().gt, 0.5 + static_cast<double>(b)});
  }
  return batch;
}

/// Tiny network with non-trivial batch-norm affines and input statistics.
inline ModelParams<double> perturbed_tiny_params(std::uint64_t seed) {
  ModelParams<double> p = init_params<double>(tiny_config(), seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto* bn : {&p.encoder_bn[0], &p.encoder_bn[1], &p.encoder_bn[2], &p.decoder_bn[0], &p.decoder_bn[1],
                   &p.decoder_bn[2]}) {
    bn->gamma = bn->gamma.unaryExpr([&](double g) { return g + n(rng); });
    bn->beta = bn->beta.unaryExpr([&](double) { return n(rng); });
  }
  p.input_mean << 25.0, 0.0, -5.0, 0.0;
  p.input_std << 14.0, 0.6, 6.0, 6.0;
  return p;
}

/// |a - b| / max(|a|, |b|); pairs that are both below 1e-10 count as equal.
inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < 1e-10 ? 0.0 : std::abs(a - b) / scale;
}

struct GradientCheck {
  std::size_t checked = 0;
  double worst = 0.0;
  std::vector<std::string> mismatches;
};

/// Central differences with step h on every trainable coordinate.
template <typename Scalar>
GradientCheck check_gradients(const ModelParams<Scalar>& params, std::span<const Example> batch, std::uint64_t seed,
                              const GradientResult<Scalar>& analytic, Scalar h = Scalar(1e-4),
                              double tolerance = 1e-4) {
  ModelParams<Scalar> probe = params;
  std::vector<MatrixX<Scalar>*> probe_arrays;
  probe.visit_trainable([&](const std::string&, MatrixX<Scalar>& m) { probe_arrays.push_back(&m); });
  std::vector<std::pair<std::string, const MatrixX<Scalar>*>> grad_arrays;
  analytic.grads.visit_trainable(
      [&](const std::string& name, const MatrixX<Scalar>& m) { grad_arrays.emplace_back(name, &m); });

  GradientCheck report;
  for (std::size_t a = 0; a < probe_arrays.size(); ++a) {
    MatrixX<Scalar>& m = *probe_arrays[a];
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      const Scalar saved = m.data()[k];
      m.data()[k] = saved + h;
      const Scalar up = batch_loss(probe, batch, seed);
      m.data()[k] = saved - h;
      const Scalar down = batch_loss(probe, batch, seed);
      m.data()[k] = saved;
      const auto numeric = static_cast<double>((up - down) / (2 * h));
      const auto exact = static_cast<double>(grad_arrays[a].second->data()[k]);
      const double err = relative_error(exact, numeric);
      report.worst = std::max(report.worst, err);
      ++report.checked;
      if (err > tolerance) {
        std::ostringstream line;
        line << grad_arrays[a].first << "[" << k << "] analytic " << exact << " numeric " << numeric;
        report.mismatches.push_back(line.str());
      }
    }
  }
  return report;
}

}  // namespace egoseg::testing
