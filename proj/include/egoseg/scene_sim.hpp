// SPDX-License-Identifier: Apache-2.0
//
// Synthetic radar sequences with exact ground truth, plus the labeling rules
// used to turn recorded odometry and moving-object annotations into
// static / moving / false-positive classes.
#pragma once

#include "egoseg/ego_solver.hpp"
#include "egoseg/errors.hpp"
#include "egoseg/point_model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace egoseg {

/// Constant (speed, yaw rate) held for `duration` seconds (rounded to frames).
struct EgoSegment {
  double duration = 1.0;
  double speed = 0.0;
  double yaw_rate = 0.0;
};

struct SceneConfig {
  double duration = 12.0;    // s
  double frame_rate = 16.7;  // Hz, about 60 ms per frame

  // Static scene: landmarks scattered along both road edges.
  double landmark_density = 0.6;     // per meter of road edge, per side
  double edge_offset_min = 4.0;      // m, lateral offset band of landmarks
  double edge_offset_max = 14.0;
  double detection_probability = 0.8;

  // Moving objects with constant-velocity kinematics.
  int moving_count = 8;
  double moving_speed_min = 2.0;     // m/s
  double moving_speed_max = 15.0;
  double moving_points_mean = 5.0;   // Poisson mean of detections per visible object
  double object_length_min = 0.6;    // m
  double object_length_max = 5.0;
  double object_width_min = 0.6;
  double object_width_max = 2.0;

  // Clutter.
  double false_positive_rate = 8.0;  // Poisson mean per frame
  double doppler_span = 25.0;        // m/s, unambiguous radial velocity half-span

  // Measurement noise (std).
  double sigma_vr = 0.013;           // m/s
  double sigma_range = 0.05;         // m
  double sigma_azimuth = 0.0005;     // rad

  // RCS distributions (dBsm).
  double static_rcs_mean = 0.0;
  double static_rcs_std = 6.0;
  double moving_rcs_mean = 3.0;
  double moving_rcs_std = 5.0;
  double false_positive_rcs_mean = -8.0;
  double false_positive_rcs_std = 5.0;

  // Field of view.
  double min_range = 1.0;            // m
  double max_range = 50.0;           // m
  double fov_half_angle = 1.0472;    // rad

  RadarExtrinsics extrinsics;
  int sensor_id = 3;

  // Ego profile; empty means a random profile drawn from the ranges below.
  std::vector<EgoSegment> ego_profile;
  double ego_speed_min = 6.0;
  double ego_speed_max = 14.0;
  double ego_yaw_rate_max = 0.15;    // rad/s
  double ego_segment_min = 2.0;      // s
  double ego_segment_max = 4.0;

  // Ground-truth labeling.
  double gt_residual_threshold = -1.0;  // m/s; negative selects 3 * sigma_vr
  int lifespan_min_frames = 5;

  std::size_t frame_count() const;
  double residual_threshold() const;
};

/// Throws ConfigError naming the first offending field.
void validate(const SceneConfig& config);

/// Ground truth of one moving object in one frame.
struct ObjectTruth {
  std::int64_t id = 0;
  Eigen::Vector2d center;  // radar frame, m
  int detections = 0;
};

struct SimulatedSequence {
  Sequence frames;                             // with gt and odom
  std::vector<Pose2> poses;                    // rear-axle pose per frame
  std::vector<std::vector<ObjectTruth>> objects;  // visible moving objects per frame
};

/// Deterministic in (config, seed).
SimulatedSequence simulate_sequence(const SceneConfig& config, std::uint64_t seed);

/// Static iff |v_r + cos(a) v_x + sin(a) v_y| <= residual_threshold with the
/// radar motion derived from `ego`; otherwise moving iff annotated, else a
/// false positive. Static wins over a moving annotation.
GroundTruthLabels generate_gt_labels(const RadarFrame& frame, const EgoMotionState& ego,
                                     const RadarExtrinsics& extrinsics, double residual_threshold,
                                     std::span<const std::optional<std::int64_t>> moving_annotations);

/// Moving instances present in fewer than `min_frames` frames become
/// non-moving (false positives: static points were never moving).
Sequence apply_lifespan_filter(Sequence sequence, int min_frames = 5);

}  // namespace egoseg
