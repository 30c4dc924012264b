// SPDX-License-Identifier: Apache-2.0
//
// Scores predictions against labeled sequences: moving-instance detection
// counts and ego-motion accuracy.
#pragma once

#include "egoseg/inference.hpp"
#include "egoseg/instance.hpp"
#include "egoseg/metrics.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace egoseg {

struct EvaluationConfig {
  ClusterConfig cluster;
  SRmseConfig s_rmse;
  RteOptions rte;
  // Frames before this index are not scored; empty starts at the first
  // frame that has a prediction.
  std::optional<std::size_t> first_frame;
};

/// Moving points of one frame clustered and matched against the labeled moving points.
InstanceReport evaluate_instances(const RadarFrame& frame, std::span<const PointClass> predicted,
                                  const ClusterConfig& config);

struct SequenceEvaluation {
  std::string name;
  std::size_t frames = 0;          // scored frames
  std::size_t flagged_frames = 0;  // scored frames without an ego-motion estimate
  std::size_t tp = 0, fp = 0, fn = 0;
  DetectionScores scores;
  // Ego-motion errors of every scored frame, speed in cm/s and yaw rate in deg/s.
  std::vector<double> speed_truth, speed_estimate, yaw_rate_truth, yaw_rate_estimate;
  std::optional<double> s_rmse_speed, s_rmse_yaw_rate;
  std::vector<double> rte_segments;
  std::optional<double> rte;
};

/// `predictions` are matched to frames by timestamp; every frame from the
/// first scored one on must have one. Frames without an ego-motion
/// estimate reuse the nearest earlier estimate (or the first later one).
/// Ego-motion metrics require odometry on every scored frame.
SequenceEvaluation evaluate_sequence(std::span<const RadarFrame> frames, std::span<const FramePrediction> predictions,
                                     const EvaluationConfig& config, std::string name = {});

struct EvaluationReport {
  std::size_t tp = 0, fp = 0, fn = 0;
  DetectionScores scores;
  std::optional<double> s_rmse_speed;     // cm/s
  std::optional<double> s_rmse_yaw_rate;  // deg/s
  std::optional<double> rte;              // m, mean over all segments of all sequences
  std::vector<SequenceEvaluation> per_sequence;
};

/// Counts are summed before scoring; ego-motion errors are pooled over frames.
EvaluationReport aggregate(std::vector<SequenceEvaluation> sequences, const EvaluationConfig& config);

nlohmann::json to_json(const EvaluationReport& report);

}  // namespace egoseg
