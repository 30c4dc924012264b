// SPDX-License-Identifier: Apache-2.0
//
// Static point-cloud map accumulated along a trajectory, and an SVG overlay
// of ground-truth versus estimated trajectories.
#pragma once

#include "egoseg/ego_solver.hpp"
#include "egoseg/point_model.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace egoseg {

/// Radar-frame positions (2 x N) expressed in the world frame, given the
/// vehicle (rear-axle) pose and the radar mounting.
Eigen::Matrix2Xd radar_to_world(const Eigen::Matrix2Xd& radar_points, const Pose2& vehicle_pose,
                                const RadarExtrinsics& extrinsics);

struct MapPoint {
  std::size_t frame = 0;
  Eigen::Vector2d position;
};

/// Every point labeled STATIC in `labels[k]` of frame k, placed with `poses[k]`.
std::vector<MapPoint> accumulate_static_map(std::span<const RadarFrame> frames,
                                            std::span<const std::vector<PointClass>> labels,
                                            std::span<const Pose2> poses, const RadarExtrinsics& extrinsics);

struct SvgLayer {
  std::string label;
  std::string color;
  std::vector<Eigen::Vector2d> points;
  bool polyline = false;
};

/// Equal-aspect plot of the layers with a legend; y points up.
void write_svg(std::ostream& out, std::span<const SvgLayer> layers, double width_px = 900.0);

}  // namespace egoseg
