// SPDX-License-Identifier: Apache-2.0
//
// Network outputs refined by the Doppler update heads into final labels and
// an ego-motion estimate.
#pragma once

#include "egoseg/ego_solver.hpp"
#include "egoseg/network.hpp"
#include "egoseg/point_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace egoseg {

struct PointWeights {
  Eigen::VectorXd static_ini, moving_ini;
  Eigen::VectorXd static_new, moving_new;
};

struct FramePrediction {
  double timestamp = 0.0;
  std::vector<PointClass> labels;
  PointWeights weights;
  std::optional<RadarMotion> radar_motion;  // w-LSQ solution with static_new
  std::optional<EgoMotionState> ego;
  std::optional<std::string> flag;          // why no ego-motion was produced
};

/// Static head: w-LSQ with static_ini, Gaussian refresh to static_new.
/// Moving head: moving_ini gated by static_new. When the first solve fails
/// (underdetermined or ill-conditioned) static_new is all zero, the frame is
/// flagged and no ego-motion is reported.
FramePrediction apply_update_heads(const Eigen::Ref<const Eigen::VectorXd>& azimuth,
                                   const Eigen::Ref<const Eigen::VectorXd>& radial_velocity,
                                   const Eigen::Ref<const Eigen::VectorXd>& static_ini,
                                   const Eigen::Ref<const Eigen::VectorXd>& moving_ini,
                                   const RadarExtrinsics& extrinsics, const SolverConfig& solver);

/// Forward pass in inference mode plus the update heads, for the window's last frame.
FramePrediction infer_window(const FrameWindow& window, const ModelParams<float>& params,
                             const RadarExtrinsics& extrinsics, const SolverConfig& solver);

/// One prediction per frame that closes a full window (frames T-1 .. L-1).
std::vector<FramePrediction> infer_sequence(std::span<const RadarFrame> frames, const ModelParams<float>& params,
                                            std::size_t window_length, const RadarExtrinsics& extrinsics,
                                            const SolverConfig& solver);

}  // namespace egoseg
