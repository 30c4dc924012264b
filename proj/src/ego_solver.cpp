// SPDX-License-Identifier: Apache-2.0
#include "egoseg/ego_solver.hpp"

#include <cmath>

namespace egoseg {

namespace {

// sin(u)/u, series near zero.
double sinc(double u) {
  if (std::abs(u) < 1e-4) return 1.0 - u * u / 6.0;
  return std::sin(u) / u;
}

}  // namespace

Pose2 advance_pose(const Pose2& pose, const EgoMotionState& motion, double dt) {
  // Chord of the arc: length v dt sinc(w dt / 2), direction heading + w dt / 2.
  const double half_turn = 0.5 * motion.yaw_rate * dt;
  const double chord = motion.speed * dt * sinc(half_turn);
  const double dir = pose.heading + half_turn;
  return {pose.x + chord * std::cos(dir), pose.y + chord * std::sin(dir),
          normalize_angle(pose.heading + motion.yaw_rate * dt)};
}

std::vector<Pose2> integrate_trajectory(std::span<const TimedMotion> states, const Pose2& start) {
  std::vector<Pose2> poses;
  if (states.empty()) return poses;
  poses.reserve(states.size());
  poses.push_back(start);
  for (std::size_t k = 1; k < states.size(); ++k) {
    const double dt = states[k].timestamp - states[k - 1].timestamp;
    if (!(dt > 0.0)) throw std::invalid_argument("integrate_trajectory: timestamps must increase");
    poses.push_back(advance_pose(poses.back(), states[k - 1].motion, dt));
  }
  return poses;
}

StaticUpdate static_update_head(const Eigen::Ref<const Eigen::VectorXd>& azimuth,
                                const Eigen::Ref<const Eigen::VectorXd>& radial_velocity,
                                const Eigen::Ref<const Eigen::VectorXd>& static_ini,
                                const SolverConfig& config) {
  StaticUpdate out;
  Eigen::VectorXd weights = static_ini;
  for (int it = 0; it < std::max(config.iterations, 1); ++it) {
    out.motion = solve_wlsq(azimuth, radial_velocity, weights, config.condition_limit);
    weights = update_static_weights(azimuth, radial_velocity, out.motion, config.sigma);
  }
  out.static_new = std::move(weights);
  return out;
}

}  // namespace egoseg
