// SPDX-License-Identifier: Apache-2.0
#include "egoseg/point_model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace egoseg {

const char* to_string(PointClass c) {
  switch (c) {
    case PointClass::kStatic:
      return "static";
    case PointClass::kMoving:
      return "moving";
    case PointClass::kFalsePositive:
      return "false_positive";
  }
  return "unknown";
}

double normalize_angle(double angle) {
  constexpr double kPi = std::numbers::pi;
  // In-range angles pass through untouched; the shift below is not exact.
  if (angle >= -kPi && angle < kPi) return angle;
  double wrapped = std::fmod(angle + kPi, 2.0 * kPi);
  if (wrapped < 0.0) wrapped += 2.0 * kPi;
  wrapped -= kPi;
  // fmod can land exactly on +pi after the shift back
  if (wrapped >= kPi) wrapped -= 2.0 * kPi;
  return wrapped;
}

std::vector<Violation> validate_frame(const RadarFrame& frame) {
  constexpr double kPi = std::numbers::pi;
  std::vector<Violation> out;
  if (!std::isfinite(frame.timestamp)) out.push_back({"timestamp not finite", {}});

  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const RadarPoint& p = frame.points[i];
    if (!std::isfinite(p.range) || p.range < 0.0)
      out.push_back({fmt::format("range invalid at point {}", i), i});
    if (!std::isfinite(p.azimuth) || p.azimuth < -kPi || p.azimuth >= kPi)
      out.push_back({fmt::format("azimuth out of range at point {}", i), i});
    if (!std::isfinite(p.radial_velocity))
      out.push_back({fmt::format("radial_velocity not finite at point {}", i), i});
    if (p.rcs && !std::isfinite(*p.rcs))
      out.push_back({fmt::format("rcs not finite at point {}", i), i});
  }

  if (frame.gt) {
    const GroundTruthLabels& gt = *frame.gt;
    if (gt.classes.size() != frame.points.size() || gt.instances.size() != frame.points.size()) {
      out.push_back({"gt label count does not match point count", {}});
    } else {
      for (std::size_t i = 0; i < gt.classes.size(); ++i) {
        const bool moving = gt.classes[i] == PointClass::kMoving;
        if (moving != gt.instances[i].has_value())
          out.push_back({fmt::format("instance id must be present iff moving at point {}", i), i});
      }
    }
  }

  if (frame.annotations && frame.annotations->size() != frame.points.size())
    out.push_back({"annotation count does not match point count", {}});

  if (frame.odom && (!std::isfinite(frame.odom->speed) || !std::isfinite(frame.odom->yaw_rate)))
    out.push_back({"odometry not finite", {}});
  return out;
}

std::vector<Violation> validate_sequence(std::span<const RadarFrame> frames) {
  std::vector<Violation> out;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    for (Violation& v : validate_frame(frames[k])) {
      v.message = fmt::format("frame {}: {}", k, v.message);
      out.push_back(std::move(v));
    }
    if (k > 0 && !(frames[k].timestamp > frames[k - 1].timestamp))
      out.push_back({fmt::format("frame {}: timestamp not strictly increasing", k), {}});
  }
  return out;
}

Eigen::MatrixXd point_features(const RadarFrame& frame, int feature_count) {
  if (feature_count != kBaseFeatureCount && feature_count != kRcsFeatureCount)
    throw std::invalid_argument(fmt::format("unsupported feature count {}", feature_count));
  const auto n = static_cast<Eigen::Index>(frame.points.size());
  Eigen::MatrixXd f(feature_count, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const RadarPoint& p = frame.points[static_cast<std::size_t>(i)];
    f(0, i) = p.range;
    f(1, i) = p.azimuth;
    f(2, i) = p.radial_velocity;
    if (feature_count == kRcsFeatureCount) f(3, i) = p.rcs.value_or(0.0);
  }
  return f;
}

Eigen::Matrix2Xd point_positions(const RadarFrame& frame) {
  Eigen::Matrix2Xd xy(2, static_cast<Eigen::Index>(frame.points.size()));
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const RadarPoint& p = frame.points[i];
    xy.col(static_cast<Eigen::Index>(i)) << p.range * std::cos(p.azimuth), p.range * std::sin(p.azimuth);
  }
  return xy;
}

FrameWindow make_window(std::span<const RadarFrame> frames, int feature_count) {
  if (frames.empty()) throw std::invalid_argument("window needs at least one frame");
  std::size_t padded = 0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (k > 0 && !(frames[k].timestamp > frames[k - 1].timestamp))
      throw std::invalid_argument("window frames must be in chronological order");
    padded = std::max(padded, frames[k].points.size());
  }

  FrameWindow w;
  const auto n_pad = static_cast<Eigen::Index>(padded);
  const auto t_len = static_cast<Eigen::Index>(frames.size());
  w.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n_pad, t_len, false);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(feature_count, n_pad);
    const Eigen::MatrixXd real = point_features(frames[k], feature_count);
    f.leftCols(real.cols()) = real;
    w.mask.col(static_cast<Eigen::Index>(k)).head(real.cols()).setConstant(true);
    w.features.push_back(std::move(f));
    w.timestamps.push_back(frames[k].timestamp);
  }
  return w;
}

std::size_t window_count(std::size_t sequence_length, std::size_t window_length) {
  if (window_length == 0 || sequence_length < window_length) return 0;
  return sequence_length - window_length + 1;
}

std::vector<FrameWindow> sliding_windows(std::span<const RadarFrame> frames,
                                         std::size_t window_length, int feature_count) {
  std::vector<FrameWindow> out;
  const std::size_t count = window_count(frames.size(), window_length);
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k)
    out.push_back(make_window(frames.subspan(k, window_length), feature_count));
  return out;
}

}  // namespace egoseg
