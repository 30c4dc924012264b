// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "egoseg/ego_solver.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace egoseg {

/// Instance-level detection scores; a metric with a zero denominator is empty.
struct DetectionScores {
  std::optional<double> fdr;
  std::optional<double> mdr;
  std::optional<double> f1;
  std::optional<double> iou;
};

DetectionScores detection_scores(std::size_t tp, std::size_t fp, std::size_t fn);

/// Saturation settings of the truncated RMSE. Speed in cm/s, yaw rate in deg/s.
struct SRmseConfig {
  double speed_c_err = 50.0;
  double speed_s = 50.0;
  double yaw_rate_c_err = 2.86;
  double yaw_rate_s = 2.86;
};

/// sqrt(mean(d_p^2)) with d_p = e_p if |e_p| <= c_err, else s.
double s_rmse(std::span<const double> truth, std::span<const double> estimate, double c_err, double s);

class TrajectoryTooShortError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RteOptions {
  double segment_length = 50.0;  // m of ground-truth arc length
  double heading_offset = 0.0;   // rad added to the estimate's start heading of every segment
};

struct RteResult {
  double mean = 0.0;                   // m
  std::vector<double> segment_errors;  // m, one per full segment
};

/// Relative trajectory error: the ground-truth trajectory is cut into
/// consecutive segments of `segment_length` arc length; on each, the
/// estimated motion is re-integrated from the ground-truth start pose and
/// the endpoint distance is recorded. `estimate[k]` pairs with `truth[k]`.
RteResult relative_trajectory_error(std::span<const Pose2> truth, std::span<const TimedMotion> estimate,
                                    const RteOptions& options = {});

}  // namespace egoseg
