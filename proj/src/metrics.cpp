// SPDX-License-Identifier: Apache-2.0
#include "egoseg/metrics.hpp"

#include <cmath>

namespace egoseg {

namespace {

std::optional<double> ratio(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

}  // namespace

DetectionScores detection_scores(std::size_t tp, std::size_t fp, std::size_t fn) {
  const auto t = static_cast<double>(tp);
  const auto p = static_cast<double>(fp);
  const auto n = static_cast<double>(fn);
  return {ratio(p, p + t), ratio(n, n + t), ratio(2.0 * t, 2.0 * t + p + n), ratio(t, t + p + n)};
}

double s_rmse(std::span<const double> truth, std::span<const double> estimate, double c_err, double s) {
  if (truth.size() != estimate.size()) throw std::invalid_argument("s_rmse: series lengths differ");
  if (truth.empty()) throw std::invalid_argument("s_rmse: empty series");
  double sum = 0.0;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    const double e = truth[p] - estimate[p];
    const double d = std::abs(e) <= c_err ? e : s;
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(truth.size()));
}

RteResult relative_trajectory_error(std::span<const Pose2> truth, std::span<const TimedMotion> estimate,
                                    const RteOptions& options) {
  if (truth.size() != estimate.size())
    throw std::invalid_argument("relative_trajectory_error: truth and estimate lengths differ");
  if (!(options.segment_length > 0.0))
    throw std::invalid_argument("relative_trajectory_error: segment length must be positive");
  constexpr double kArcTolerance = 1e-9;

  RteResult result;
  std::size_t start = 0;
  double arc = 0.0;
  for (std::size_t k = 1; k < truth.size(); ++k) {
    arc += std::hypot(truth[k].x - truth[k - 1].x, truth[k].y - truth[k - 1].y);
    if (arc + kArcTolerance < options.segment_length) continue;

    Pose2 pose = truth[start];
    pose.heading += options.heading_offset;
    for (std::size_t i = start; i < k; ++i)
      pose = advance_pose(pose, estimate[i].motion, estimate[i + 1].timestamp - estimate[i].timestamp);
    result.segment_errors.push_back(std::hypot(pose.x - truth[k].x, pose.y - truth[k].y));
    start = k;
    arc = 0.0;
  }
  if (result.segment_errors.empty())
    throw TrajectoryTooShortError("relative_trajectory_error: trajectory shorter than one segment");
  double sum = 0.0;
  for (double e : result.segment_errors) sum += e;
  result.mean = sum / static_cast<double>(result.segment_errors.size());
  return result;
}

}  // namespace egoseg
