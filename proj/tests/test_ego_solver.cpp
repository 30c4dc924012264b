// SPDX-License-Identifier: Apache-2.0
#include "egoseg/ego_solver.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace egoseg;

namespace {

constexpr double kPi = std::numbers::pi;
const double kPeak = 1.0 / (0.013 * std::sqrt(2.0 * kPi));

// Radial velocities a static scene produces for a given radar motion.
Eigen::VectorXd static_doppler(const Eigen::VectorXd& az, double vx, double vy) {
  return -(az.array().cos() * vx + az.array().sin() * vy).matrix();
}

double weighted_cost(const Eigen::VectorXd& az, const Eigen::VectorXd& vr, const Eigen::VectorXd& w, double vx,
                     double vy) {
  const Eigen::ArrayXd r = az.array().cos() * vx + az.array().sin() * vy + vr.array();
  return (w.array() * r * r).sum();
}

}  // namespace

TEST_CASE("w-LSQ exactly determined and zero cases") {
  Eigen::Vector2d az(0.0, kPi / 2);
  Eigen::Vector2d vr(-2.0, 0.0);
  const RadarMotion m = solve_wlsq(az, vr, Eigen::Vector2d::Ones());
  CHECK(m.vx == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(std::abs(m.vy) < 1e-14);

  const Eigen::VectorXd spread = Eigen::VectorXd::LinSpaced(9, -1.0, 1.0);
  const RadarMotion z = solve_wlsq(spread, Eigen::VectorXd::Zero(9), Eigen::VectorXd::Ones(9));
  CHECK(z.vx == 0.0);
  CHECK(z.vy == 0.0);
}

TEST_CASE("w-LSQ recovers a planted motion under sigma = 0.013 noise") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> az_dist(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.013);
  Eigen::VectorXd az(100);
  for (auto& a : az) a = az_dist(rng);
  Eigen::VectorXd vr = static_doppler(az, 10.0, 0.5);
  for (auto& v : vr) v += noise(rng);
  const RadarMotion m = solve_wlsq(az, vr, Eigen::VectorXd::Ones(100));
  CHECK(std::abs(m.vx - 10.0) < 0.01);
  CHECK(std::abs(m.vy - 0.5) < 0.01);
}

TEST_CASE("w-LSQ errors") {
  const Eigen::VectorXd az = Eigen::VectorXd::LinSpaced(5, -0.5, 0.5);
  const Eigen::VectorXd vr = static_doppler(az, 3.0, 0.0);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(5);
  CHECK_THROWS_AS(solve_wlsq(az, vr, w), UnderdeterminedError);
  w(2) = 1.0;
  CHECK_THROWS_AS(solve_wlsq(az, vr, w), UnderdeterminedError);

  const Eigen::VectorXd same = Eigen::VectorXd::Constant(5, 0.3);
  CHECK_THROWS_AS(solve_wlsq(same, vr, Eigen::VectorXd::Ones(5)), IllConditionedError);

  w.setOnes();
  w(0) = -1.0;
  CHECK_THROWS_AS(solve_wlsq(az, vr, w), std::invalid_argument);
}

TEST_CASE("w-LSQ optimality against random perturbations") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  std::uniform_real_distribution<double> wd(0.0, 2.0);
  std::normal_distribution<double> step(0.0, 1e-3);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd az(30), vr(30), w(30);
    for (int i = 0; i < 30; ++i) {
      az(i) = u(rng);
      vr(i) = 8.0 * u(rng);
      w(i) = wd(rng);
    }
    const RadarMotion m = solve_wlsq(az, vr, w);
    const double best = weighted_cost(az, vr, w, m.vx, m.vy);
    for (int k = 0; k < 100; ++k)
      CHECK(weighted_cost(az, vr, w, m.vx + step(rng), m.vy + step(rng)) >= best - 1e-12 * (1.0 + best));
  }
}

TEST_CASE("w-LSQ is invariant to a common weight scale") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd az(25), vr(25), w(25);
  for (int i = 0; i < 25; ++i) {
    az(i) = u(rng);
    vr(i) = 5.0 * u(rng);
    w(i) = 0.5 + 0.5 * u(rng);
  }
  const RadarMotion a = solve_wlsq(az, vr, w);
  for (double scale : {1e-30, 1e-3, 7.0, 1e20}) {
    const RadarMotion b = solve_wlsq(az, vr, (w * scale).eval());
    CHECK(std::abs(a.vx - b.vx) <= 1e-12 * std::max(1.0, std::abs(a.vx)));
    CHECK(std::abs(a.vy - b.vy) <= 1e-12 * std::max(1.0, std::abs(a.vy)));
  }
}

TEST_CASE("static weight refresh constants") {
  Eigen::Vector3d az(0.0, 0.0, 0.0);
  Eigen::Vector3d vr(0.0, 0.013, 0.0440);
  const Eigen::VectorXd w = update_static_weights(az, vr, RadarMotion{0.0, 0.0}, 0.013);
  CHECK(kPeak == doctest::Approx(30.69).epsilon(1e-3));
  CHECK(w(0) == doctest::Approx(kPeak).epsilon(1e-12));
  CHECK(w(1) == doctest::Approx(kPeak * std::exp(-0.5)).epsilon(1e-12));
  CHECK(w(1) == doctest::Approx(18.61).epsilon(1e-3));
  CHECK(w(2) == doctest::Approx(0.0999).epsilon(1e-2));
  CHECK(w(2) < 0.1);
  CHECK_THROWS(update_static_weights(az, vr, RadarMotion{}, 0.0));
}

TEST_CASE("moving gate keeps weights at or below c_static") {
  const Eigen::Vector3d s(30.69, 0.05, 0.1);
  const Eigen::Vector3d m(0.9, 0.8, 0.7);
  const Eigen::VectorXd g = gate_moving_weights(s, m, 0.1);
  CHECK(g(0) == 0.0);
  CHECK(g(1) == 0.8);
  CHECK(g(2) == 0.7);
  CHECK(gate_moving_weights(Eigen::Vector2d(30.69, 0.0), Eigen::Vector2d(0.9, 0.9), 0.1)(0) == 0.0);
  CHECK(gate_moving_weights(s, g, 0.1) == g);
}

TEST_CASE("one solve-refresh cycle on clean statics peaks exactly on the static set") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd az(40), vr(40), ini(40);
  for (int i = 0; i < 40; ++i) az(i) = u(rng);
  vr = static_doppler(az, 9.0, -1.2);
  ini.setConstant(0.9);
  for (int i = 30; i < 40; ++i) {
    vr(i) += 2.0 + std::abs(u(rng));  // movers
    ini(i) = 0.0;
  }
  const StaticUpdate up = static_update_head(az, vr, ini, SolverConfig{});
  for (int i = 0; i < 30; ++i) CHECK(up.static_new(i) == doctest::Approx(kPeak).epsilon(1e-9));
  for (int i = 30; i < 40; ++i) CHECK(up.static_new(i) < 1e-9);
}

TEST_CASE("radar to vehicle kinematics") {
  const EgoMotionState a = radar_to_vehicle(RadarMotion{5.0, 0.0}, {1.0, 0.0, 0.0});
  CHECK(a.speed == 5.0);
  CHECK(a.yaw_rate == 0.0);

  const EgoMotionState b = radar_to_vehicle(RadarMotion{1.0, -3.0}, {2.0, 0.5, kPi / 2});
  CHECK(b.yaw_rate == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(b.speed == doctest::Approx(3.25).epsilon(1e-14));

  const EgoMotionState z = radar_to_vehicle(RadarMotion{}, {3.6, -0.6, 0.7});
  CHECK(z.speed == 0.0);
  CHECK(z.yaw_rate == 0.0);
  CHECK_THROWS_AS(radar_to_vehicle(RadarMotion{1.0, 1.0}, {0.0, 1.0, 0.0}), DegenerateExtrinsicsError);

  const RadarMotion r = vehicle_to_radar(EgoMotionState{7.0, 0.3}, {2.0, 0.0, 0.0});
  CHECK(r.vx == 7.0);
  CHECK(r.vy == doctest::Approx(0.6));
  CHECK(vehicle_to_radar(EgoMotionState{}, {2.0, 1.0, 1.0}) == RadarMotion{});
}

TEST_CASE("vehicle and radar motion round trip") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    RadarExtrinsics e{4.0 * u(rng), 2.0 * u(rng), normalize_angle(kPi * u(rng))};
    if (std::abs(e.x) < 0.05) e.x = 0.05;
    const EgoMotionState ego{20.0 * u(rng), 0.8 * u(rng)};
    const EgoMotionState back = radar_to_vehicle(vehicle_to_radar(ego, e), e);
    CHECK(std::abs(back.speed - ego.speed) < 1e-10);
    CHECK(std::abs(back.yaw_rate - ego.yaw_rate) < 1e-10);
  }
}

TEST_CASE("trajectory integration") {
  std::vector<TimedMotion> straight{{{1.0, 0.0}, 0.0}, {{1.0, 0.0}, 10.0}};
  const auto line = integrate_trajectory(straight);
  CHECK(line[1].x == doctest::Approx(10.0));
  CHECK(line[1].y == 0.0);
  CHECK(line[1].heading == 0.0);

  // Closed circle sampled at 1 kHz.
  const double period = 2 * kPi / 0.1;
  std::vector<TimedMotion> circle;
  const int steps = 1000;
  for (int k = 0; k <= steps; ++k) circle.push_back({{1.0, 0.1}, period * k / steps});
  const Pose2 end = integrate_trajectory(circle).back();
  CHECK(std::hypot(end.x, end.y) <= 1e-6);

  // Radius v / w: the quarter turn lands at (r, r).
  const auto quarter = integrate_trajectory(std::vector<TimedMotion>{{{2.0, 0.5}, 0.0}, {{2.0, 0.5}, kPi}});
  CHECK(quarter[1].x == doctest::Approx(4.0));
  CHECK(quarter[1].y == doctest::Approx(4.0));

  const auto still = integrate_trajectory(std::vector<TimedMotion>{{{0.0, 0.0}, 0.0}, {{0.0, 0.0}, 3.0}}, {1.0, 2.0, 0.3});
  CHECK(still[1].x == 1.0);
  CHECK(still[1].y == 2.0);
  CHECK(still[1].heading == doctest::Approx(0.3));

  CHECK_THROWS(integrate_trajectory(std::vector<TimedMotion>{{{1.0, 0.0}, 1.0}, {{1.0, 0.0}, 1.0}}));
}
