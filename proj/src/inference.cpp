// SPDX-License-Identifier: Apache-2.0
#include "egoseg/inference.hpp"

#include <fmt/format.h>

namespace egoseg {

FramePrediction apply_update_heads(const Eigen::Ref<const Eigen::VectorXd>& azimuth,
                                   const Eigen::Ref<const Eigen::VectorXd>& radial_velocity,
                                   const Eigen::Ref<const Eigen::VectorXd>& static_ini,
                                   const Eigen::Ref<const Eigen::VectorXd>& moving_ini,
                                   const RadarExtrinsics& extrinsics, const SolverConfig& solver) {
  const Eigen::Index n = azimuth.size();
  if (radial_velocity.size() != n || static_ini.size() != n || moving_ini.size() != n)
    throw std::invalid_argument("apply_update_heads: input lengths differ");
  FramePrediction out;
  out.weights.static_ini = static_ini;
  out.weights.moving_ini = moving_ini;
  out.weights.static_new = Eigen::VectorXd::Zero(n);
  try {
    out.weights.static_new = static_update_head(azimuth, radial_velocity, static_ini, solver).static_new;
    const RadarMotion motion =
        solve_wlsq(azimuth, radial_velocity, out.weights.static_new, solver.condition_limit);
    out.radar_motion = motion;
    out.ego = radar_to_vehicle(motion, extrinsics);
  } catch (const UnderdeterminedError&) {
    out.flag = "underdetermined";
  } catch (const IllConditionedError&) {
    out.flag = "ill_conditioned";
  }
  out.weights.moving_new = gate_moving_weights(out.weights.static_new, moving_ini, solver.c_static);
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    PointClass c = PointClass::kFalsePositive;
    if (out.weights.static_new(i) > solver.label_threshold)
      c = PointClass::kStatic;
    else if (out.weights.moving_new(i) > solver.label_threshold)
      c = PointClass::kMoving;
    out.labels[static_cast<std::size_t>(i)] = c;
  }
  return out;
}

FramePrediction infer_window(const FrameWindow& window, const ModelParams<float>& params,
                             const RadarExtrinsics& extrinsics, const SolverConfig& solver) {
  const HeadOutputs heads = forward(window, params, false);
  const auto last = static_cast<Eigen::Index>(window.length() - 1);
  const Eigen::MatrixXd& f = window.features.back();
  Eigen::VectorXd azimuth(heads.static_ini.size()), radial_velocity(heads.static_ini.size());
  for (Eigen::Index j = 0, i = 0; j < window.padded_size(); ++j) {
    if (!window.mask(j, last)) continue;
    azimuth(i) = f(1, j);
    radial_velocity(i) = f(2, j);
    ++i;
  }
  FramePrediction out =
      apply_update_heads(azimuth, radial_velocity, heads.static_ini, heads.moving_ini, extrinsics, solver);
  out.timestamp = window.timestamps.back();
  return out;
}

std::vector<FramePrediction> infer_sequence(std::span<const RadarFrame> frames, const ModelParams<float>& params,
                                            std::size_t window_length, const RadarExtrinsics& extrinsics,
                                            const SolverConfig& solver) {
  std::vector<FramePrediction> out;
  if (window_length < 1) throw std::invalid_argument("infer_sequence: window length must be at least 1");
  for (std::size_t end = window_length - 1; end < frames.size(); ++end) {
    const FrameWindow w = make_window(frames.subspan(end + 1 - window_length, window_length),
                                      params.config.feature_count);
    out.push_back(infer_window(w, params, extrinsics, solver));
  }
  return out;
}

}  // namespace egoseg
