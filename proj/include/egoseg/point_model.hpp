// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace egoseg {

enum class PointClass : std::uint8_t {
  kStatic = 0,
  kMoving = 1,
  kFalsePositive = 2,
};

const char* to_string(PointClass c);

/// One radar detection in polar sensor coordinates.
struct RadarPoint {
  double range = 0.0;            // m
  double azimuth = 0.0;          // rad, angle of arrival in the radar frame
  double radial_velocity = 0.0;  // m/s, not ego-compensated
  std::optional<double> rcs;     // dBsm

  bool operator==(const RadarPoint&) const = default;
};

/// Per-point labels. `instances[i]` is set iff `classes[i] == kMoving`.
struct GroundTruthLabels {
  std::vector<PointClass> classes;
  std::vector<std::optional<std::int64_t>> instances;

  bool operator==(const GroundTruthLabels&) const = default;
};

/// Velocity of the radar sensor expressed in its own axes.
template <typename Scalar>
struct RadarMotionT {
  Scalar vx{0};
  Scalar vy{0};

  Eigen::Matrix<Scalar, 2, 1> vector() const { return {vx, vy}; }
  bool operator==(const RadarMotionT&) const = default;
};

/// Planar vehicle motion; lateral speed is zero by model assumption.
template <typename Scalar>
struct EgoMotionT {
  Scalar speed{0};     // m/s, forward speed of the rear-axle center
  Scalar yaw_rate{0};  // rad/s

  bool operator==(const EgoMotionT&) const = default;
};

using RadarMotion = RadarMotionT<double>;
using EgoMotionState = EgoMotionT<double>;

/// Mounting pose of the radar relative to the rear-axle center.
struct RadarExtrinsics {
  double x = 3.6;
  double y = -0.6;
  double theta = 0.0;

  bool operator==(const RadarExtrinsics&) const = default;
};

struct RadarFrame {
  double timestamp = 0.0;
  int sensor_id = 0;
  std::vector<RadarPoint> points;
  std::optional<GroundTruthLabels> gt;
  std::optional<EgoMotionState> odom;
  // External moving-object annotations (instance id per point, empty = not
  // annotated) for frames ingested without class labels.
  std::optional<std::vector<std::optional<std::int64_t>>> annotations;

  std::size_t size() const { return points.size(); }
  bool operator==(const RadarFrame&) const = default;
};

using Sequence = std::vector<RadarFrame>;

struct Violation {
  std::string message;
  std::optional<std::size_t> point;  // offending point index, if any
};

/// Wraps an angle into [-pi, pi).
double normalize_angle(double angle);

/// Checks every point, label and odometry invariant of a single frame.
std::vector<Violation> validate_frame(const RadarFrame& frame);

/// validate_frame on each frame plus strictly increasing timestamps.
std::vector<Violation> validate_sequence(std::span<const RadarFrame> frames);

/// Number of point features fed to the network: range, azimuth, radial
/// velocity and, optionally, RCS.
inline constexpr int kBaseFeatureCount = 3;
inline constexpr int kRcsFeatureCount = 4;

/// Feature matrix (feature_count x N) of a frame. Missing RCS reads as 0.
Eigen::MatrixXd point_features(const RadarFrame& frame, int feature_count);

/// Cartesian radar-frame positions (2 x N).
Eigen::Matrix2Xd point_positions(const RadarFrame& frame);

/// T chronologically ordered frames padded to the largest N in the window.
struct FrameWindow {
  std::vector<double> timestamps;
  std::vector<Eigen::MatrixXd> features;  // per frame, feature_count x padded_size
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // padded_size x T

  std::size_t length() const { return features.size(); }
  Eigen::Index padded_size() const { return mask.rows(); }
  Eigen::Index feature_count() const {
    return features.empty() ? 0 : features.front().rows();
  }
  Eigen::Index valid_count(std::size_t frame) const {
    return mask.col(static_cast<Eigen::Index>(frame)).count();
  }
};

/// Packs `frames` (sorted by timestamp) into a padded window.
FrameWindow make_window(std::span<const RadarFrame> frames, int feature_count);

/// Number of length-`window_length` windows in a sequence of `sequence_length`.
std::size_t window_count(std::size_t sequence_length, std::size_t window_length);

/// All contiguous windows, in order; window k ends at frame k + T - 1.
std::vector<FrameWindow> sliding_windows(std::span<const RadarFrame> frames,
                                         std::size_t window_length,
                                         int feature_count);

}  // namespace egoseg
