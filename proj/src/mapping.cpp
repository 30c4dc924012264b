// SPDX-License-Identifier: Apache-2.0
#include "egoseg/mapping.hpp"

#include <fmt/format.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace egoseg {

namespace {

Eigen::Matrix2d rotation(double angle) {
  return Eigen::Rotation2Dd(angle).toRotationMatrix();
}

}  // namespace

Eigen::Matrix2Xd radar_to_world(const Eigen::Matrix2Xd& radar_points, const Pose2& vehicle_pose,
                                const RadarExtrinsics& extrinsics) {
  const Eigen::Matrix2d body = rotation(vehicle_pose.heading);
  const Eigen::Vector2d origin =
      Eigen::Vector2d(vehicle_pose.x, vehicle_pose.y) + body * Eigen::Vector2d(extrinsics.x, extrinsics.y);
  return (body * rotation(extrinsics.theta) * radar_points).colwise() + origin;
}

std::vector<MapPoint> accumulate_static_map(std::span<const RadarFrame> frames,
                                            std::span<const std::vector<PointClass>> labels,
                                            std::span<const Pose2> poses, const RadarExtrinsics& extrinsics) {
  if (labels.size() != frames.size() || poses.size() != frames.size())
    throw std::invalid_argument("accumulate_static_map: frames, labels and poses differ in length");
  std::vector<MapPoint> map;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (labels[k].size() != frames[k].size())
      throw std::invalid_argument(fmt::format("accumulate_static_map: label count mismatch in frame {}", k));
    const Eigen::Matrix2Xd world = radar_to_world(point_positions(frames[k]), poses[k], extrinsics);
    for (std::size_t i = 0; i < labels[k].size(); ++i)
      if (labels[k][i] == PointClass::kStatic) map.push_back({k, world.col(static_cast<Eigen::Index>(i))});
  }
  return map;
}

void write_svg(std::ostream& out, std::span<const SvgLayer> layers, double width_px) {
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (const SvgLayer& layer : layers)
    for (const Eigen::Vector2d& p : layer.points) {
      min_x = std::min(min_x, p.x());
      max_x = std::max(max_x, p.x());
      min_y = std::min(min_y, p.y());
      max_y = std::max(max_y, p.y());
    }
  if (!std::isfinite(min_x)) min_x = max_x = min_y = max_y = 0.0;
  const double margin = 20.0;
  const double span = std::max({max_x - min_x, max_y - min_y, 1.0});
  const double scale = (width_px - 2.0 * margin) / span;
  const double height_px = (max_y - min_y) * scale + 2.0 * margin + 20.0 * static_cast<double>(layers.size());
  auto px = [&](const Eigen::Vector2d& p) {
    return std::pair{margin + (p.x() - min_x) * scale, margin + (max_y - p.y()) * scale};
  };

  out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{:.0f}" height="{:.0f}" )"
                     R"(viewBox="0 0 {:.0f} {:.0f}">)",
                     width_px, height_px, width_px, height_px)
      << "\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const SvgLayer& layer : layers) {
    if (layer.polyline) {
      out << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << layer.color << "\" points=\"";
      for (const Eigen::Vector2d& p : layer.points) {
        const auto [x, y] = px(p);
        out << fmt::format("{:.2f},{:.2f} ", x, y);
      }
      out << "\"/>\n";
    } else {
      out << "<g fill=\"" << layer.color << "\">\n";
      for (const Eigen::Vector2d& p : layer.points) {
        const auto [x, y] = px(p);
        out << fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"1.2\"/>\n", x, y);
      }
      out << "</g>\n";
    }
  }
  double legend_y = (max_y - min_y) * scale + 2.0 * margin;
  for (const SvgLayer& layer : layers) {
    out << fmt::format(R"(<rect x="{:.0f}" y="{:.0f}" width="12" height="12" fill="{}"/>)", margin, legend_y,
                       layer.color)
        << fmt::format(R"(<text x="{:.0f}" y="{:.0f}" font-family="sans-serif" font-size="12">{}</text>)",
                       margin + 18.0, legend_y + 11.0, layer.label)
        << "\n";
    legend_y += 20.0;
  }
  out << "</svg>\n";
}

}  // namespace egoseg
