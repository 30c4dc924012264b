// SPDX-License-Identifier: Apache-2.0
//
// Doppler ego-motion: weighted least squares for the radar velocity, the
// Gaussian static-weight refresh, moving-weight gating, radar/vehicle
// kinematics and planar trajectory integration.
//
// Static detections obey  v_r = -(v_x cos(a) + v_y sin(a)),  i.e. A * V = D with
// rows A_i = [cos(a_i), sin(a_i)] and D_i = -v_r_i.
#pragma once

#include "egoseg/point_model.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace egoseg {

/// Fewer than two detections carry positive weight.
class UnderdeterminedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The weighted normal matrix exceeds the condition limit (azimuths too close).
class IllConditionedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mounting x-offset of zero makes the yaw rate unobservable.
class DegenerateExtrinsicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverConfig {
  double sigma = 0.013;             // m/s, Doppler error std of the static weight update
  double c_static = 0.1;            // static weight above which moving weights are zeroed
  double label_threshold = 0.1;     // weight threshold for static and moving labels
  double condition_limit = 1e8;     // max condition number of A^T W A
  int iterations = 1;               // solve -> update cycles in the static update head
};

/// Residual of each detection against a radar motion: cos(a) v_x + sin(a) v_y + v_r.
template <typename DerivedA, typename DerivedV, typename Scalar>
auto doppler_residuals(const Eigen::MatrixBase<DerivedA>& azimuth,
                       const Eigen::MatrixBase<DerivedV>& radial_velocity,
                       const RadarMotionT<Scalar>& motion) {
  return (azimuth.array().cos() * motion.vx + azimuth.array().sin() * motion.vy +
          radial_velocity.array())
      .matrix();
}

/// Weighted least-squares radar velocity, (A^T W A)^{-1} A^T W D.
template <typename DerivedA, typename DerivedV, typename DerivedW>
RadarMotionT<typename DerivedA::Scalar> solve_wlsq(const Eigen::MatrixBase<DerivedA>& azimuth,
                                                   const Eigen::MatrixBase<DerivedV>& radial_velocity,
                                                   const Eigen::MatrixBase<DerivedW>& weights,
                                                   double condition_limit = 1e8) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index n = azimuth.size();
  if (radial_velocity.size() != n || weights.size() != n)
    throw std::invalid_argument("solve_wlsq: input lengths differ");

  Scalar peak{0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar w = weights(i);
    if (w < Scalar(0) || !std::isfinite(static_cast<double>(w)))
      throw std::invalid_argument("solve_wlsq: weights must be finite and nonnegative");
    peak = std::max(peak, w);
  }

  // The solution is invariant to a common weight scale; scaling by the peak
  // keeps tiny weights from underflowing in the normal matrix.
  Scalar sxx{0}, sxy{0}, syy{0}, bx{0}, by{0};
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights(i) == Scalar(0)) continue;
    const Scalar w = weights(i) / peak;
    ++used;
    const Scalar c = std::cos(azimuth(i));
    const Scalar s = std::sin(azimuth(i));
    const Scalar d = -radial_velocity(i);
    sxx += w * c * c;
    sxy += w * c * s;
    syy += w * s * s;
    bx += w * c * d;
    by += w * s * d;
  }
  if (used < 2) throw UnderdeterminedError("solve_wlsq: fewer than two weighted detections");

  // Eigenvalues of the symmetric 2x2 normal matrix.
  const Scalar half_trace = (sxx + syy) / Scalar(2);
  const Scalar half_diff = (sxx - syy) / Scalar(2);
  const Scalar radius = std::sqrt(half_diff * half_diff + sxy * sxy);
  const Scalar lambda_max = half_trace + radius;
  const Scalar lambda_min = half_trace - radius;
  if (!(lambda_max > Scalar(0)) || !(lambda_min > lambda_max / Scalar(condition_limit)))
    throw IllConditionedError("solve_wlsq: normal matrix is ill-conditioned");

  const Scalar det = sxx * syy - sxy * sxy;
  const RadarMotionT<Scalar> out{(syy * bx - sxy * by) / det, (sxx * by - sxy * bx) / det};
  if (!std::isfinite(static_cast<double>(out.vx)) || !std::isfinite(static_cast<double>(out.vy)))
    throw IllConditionedError("solve_wlsq: solution is not finite");
  return out;
}

/// Gaussian density of each detection's Doppler residual:
/// w_i = exp(-r_i^2 / (2 sigma^2)) / (sigma sqrt(2 pi)). Not renormalized.
template <typename DerivedA, typename DerivedV, typename Scalar>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> update_static_weights(
    const Eigen::MatrixBase<DerivedA>& azimuth, const Eigen::MatrixBase<DerivedV>& radial_velocity,
    const RadarMotionT<Scalar>& motion, double sigma) {
  using Out = typename DerivedA::Scalar;
  if (!(sigma > 0.0)) throw std::invalid_argument("update_static_weights: sigma must be positive");
  const Out sig = static_cast<Out>(sigma);
  const Out peak = Out(1) / (sig * std::sqrt(Out(2) * std::numbers::pi_v<Out>));
  const RadarMotionT<Out> m{static_cast<Out>(motion.vx), static_cast<Out>(motion.vy)};
  const auto r = doppler_residuals(azimuth, radial_velocity, m).array();
  return (peak * (-(r * r) / (Out(2) * sig * sig)).exp()).matrix();
}

/// Moving weights survive only where the refreshed static weight is <= c_static.
template <typename DerivedS, typename DerivedM>
Eigen::Matrix<typename DerivedM::Scalar, Eigen::Dynamic, 1> gate_moving_weights(
    const Eigen::MatrixBase<DerivedS>& static_new, const Eigen::MatrixBase<DerivedM>& moving_ini,
    double c_static) {
  using Scalar = typename DerivedM::Scalar;
  if (static_new.size() != moving_ini.size())
    throw std::invalid_argument("gate_moving_weights: input lengths differ");
  return (static_new.array().template cast<double>() <= c_static)
      .select(moving_ini.array(), Scalar(0))
      .matrix();
}

template <typename Scalar>
EgoMotionT<Scalar> radar_to_vehicle(const RadarMotionT<Scalar>& radar, const RadarExtrinsics& extr) {
  if (extr.x == 0.0) throw DegenerateExtrinsicsError("radar_to_vehicle: extrinsic x must be nonzero");
  const Scalar c = static_cast<Scalar>(std::cos(extr.theta));
  const Scalar s = static_cast<Scalar>(std::sin(extr.theta));
  const Scalar omega = (radar.vy * c + radar.vx * s) / static_cast<Scalar>(extr.x);
  const Scalar speed = radar.vx * c - radar.vy * s + static_cast<Scalar>(extr.y) * omega;
  return {speed, omega};
}

/// Velocity of the mounting point, rotated into radar axes: R(-theta) (v - w y, w x).
template <typename Scalar>
RadarMotionT<Scalar> vehicle_to_radar(const EgoMotionT<Scalar>& ego, const RadarExtrinsics& extr) {
  const Scalar c = static_cast<Scalar>(std::cos(extr.theta));
  const Scalar s = static_cast<Scalar>(std::sin(extr.theta));
  const Scalar ax = ego.speed - ego.yaw_rate * static_cast<Scalar>(extr.y);
  const Scalar ay = ego.yaw_rate * static_cast<Scalar>(extr.x);
  return {c * ax + s * ay, -s * ax + c * ay};
}

/// Rear-axle pose in a world frame.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// Advances a pose by constant (speed, yaw_rate) for dt seconds along the exact arc.
Pose2 advance_pose(const Pose2& pose, const EgoMotionState& motion, double dt);

struct TimedMotion {
  EgoMotionState motion;
  double timestamp = 0.0;
};

/// Unicycle integration: the motion of sample k holds on [t_k, t_{k+1}).
/// Returns one pose per sample, the first equal to `start`.
std::vector<Pose2> integrate_trajectory(std::span<const TimedMotion> states, const Pose2& start = {});

/// Static update head: solve with the initial weights, refresh by the Gaussian
/// density, repeated `config.iterations` times.
struct StaticUpdate {
  RadarMotion motion;                  // solution from the initial (last input) weights
  Eigen::VectorXd static_new;
};

StaticUpdate static_update_head(const Eigen::Ref<const Eigen::VectorXd>& azimuth,
                                const Eigen::Ref<const Eigen::VectorXd>& radial_velocity,
                                const Eigen::Ref<const Eigen::VectorXd>& static_ini,
                                const SolverConfig& config);

}  // namespace egoseg
