// SPDX-License-Identifier: Apache-2.0
#include "egoseg/inference.hpp"
#include "egoseg/scene_sim.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace egoseg;

namespace {

Eigen::VectorXd column(const RadarFrame& f, double RadarPoint::*field) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(f.points.size()));
  for (std::size_t i = 0; i < f.points.size(); ++i) v(static_cast<Eigen::Index>(i)) = f.points[i].*field;
  return v;
}

Eigen::VectorXd indicator(const RadarFrame& f, PointClass c) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(f.points.size()));
  for (std::size_t i = 0; i < f.points.size(); ++i) v(static_cast<Eigen::Index>(i)) = f.gt->classes[i] == c;
  return v;
}

}  // namespace

TEST_CASE("oracle heads on noise-free frames reproduce labels and ego exactly") {
  SceneConfig sc;
  sc.duration = 4.0;
  sc.sigma_vr = 0.0;
  sc.sigma_range = 0.0;
  sc.sigma_azimuth = 0.0;
  // Just inside the residual at which the refreshed static weight crosses 0.1.
  sc.gt_residual_threshold = 0.0435;
  const SimulatedSequence sim = simulate_sequence(sc, 19);
  const SolverConfig solver;
  std::size_t moving = 0;
  std::size_t exact_frames = 0;
  for (const RadarFrame& f : sim.frames) {
    const FramePrediction p =
        apply_update_heads(column(f, &RadarPoint::azimuth), column(f, &RadarPoint::radial_velocity),
                           indicator(f, PointClass::kStatic), indicator(f, PointClass::kMoving), sc.extrinsics, solver);
    CHECK(p.labels == f.gt->classes);
    REQUIRE(p.ego);
    CHECK(!p.flag);
    // Clutter inside the gate is static by definition but lies off the true
    // curve; the ego check needs every static point on it.
    const RadarMotion truth = vehicle_to_radar(*f.odom, sc.extrinsics);
    const Eigen::VectorXd r =
        doppler_residuals(column(f, &RadarPoint::azimuth), column(f, &RadarPoint::radial_velocity), truth);
    if ((r.cwiseAbs().array() * indicator(f, PointClass::kStatic).array()).maxCoeff() > 1e-12) continue;
    ++exact_frames;
    CHECK(std::abs(p.ego->speed - f.odom->speed) < 1e-9);
    CHECK(std::abs(p.ego->yaw_rate - f.odom->yaw_rate) < 1e-9);
    moving += static_cast<std::size_t>(indicator(f, PointClass::kMoving).sum());
  }
  CHECK(moving > 0);
  CHECK(exact_frames > sim.frames.size() / 2);
}

TEST_CASE("all-zero static weights are underdetermined") {
  const Eigen::VectorXd az = Eigen::VectorXd::LinSpaced(6, -0.8, 0.8);
  const Eigen::VectorXd vr = Eigen::VectorXd::Constant(6, -4.0);
  const FramePrediction p = apply_update_heads(az, vr, Eigen::VectorXd::Zero(6), Eigen::VectorXd::Constant(6, 0.7),
                                               RadarExtrinsics{}, SolverConfig{});
  CHECK(p.flag == "underdetermined");
  CHECK(!p.ego);
  CHECK(!p.radar_motion);
  CHECK(p.weights.static_new.isZero());
  for (PointClass c : p.labels) CHECK(c == PointClass::kMoving);
}

TEST_CASE("collinear azimuths are flagged ill-conditioned") {
  const Eigen::VectorXd az = Eigen::VectorXd::Constant(4, 0.2);
  const FramePrediction p = apply_update_heads(az, Eigen::VectorXd::Constant(4, -3.0), Eigen::VectorXd::Ones(4),
                                               Eigen::VectorXd::Zero(4), RadarExtrinsics{}, SolverConfig{});
  CHECK(p.flag == "ill_conditioned");
  CHECK(!p.ego);
}

TEST_CASE("the gate turns a confident mover on the static curve into a static point") {
  // Radar moving at (5, 0): static points satisfy v_r = -5 cos(a).
  Eigen::VectorXd az(5), vr(5);
  az << -0.6, -0.2, 0.1, 0.4, 0.7;
  vr = -5.0 * az.array().cos();
  vr(4) += 2.0;
  Eigen::VectorXd s_ini(5), m_ini(5);
  s_ini << 0.9, 0.9, 0.9, 0.05, 0.0;
  m_ini << 0.0, 0.0, 0.0, 0.99, 0.99;
  const FramePrediction p = apply_update_heads(az, vr, s_ini, m_ini, RadarExtrinsics{1.0, 0.0, 0.0}, SolverConfig{});
  CHECK(p.weights.static_new(3) == doctest::Approx(30.69).epsilon(1e-3));
  CHECK(p.weights.moving_new(3) == 0.0);
  CHECK(p.labels[3] == PointClass::kStatic);
  CHECK(p.labels[4] == PointClass::kMoving);
  CHECK(p.weights.moving_new(4) == 0.99);
  REQUIRE(p.ego);
  CHECK(p.ego->speed == doctest::Approx(5.0));
  CHECK(std::abs(p.ego->yaw_rate) < 1e-9);
}

TEST_CASE("evaluating the update heads does not change the gradients") {
  std::mt19937_64 rng(2);
  const Sequence seq = testing::random_sequence(rng, 3, 8, 12);
  const ModelParams<double> params = init_params<double>(testing::tiny_config(), 4);
  const std::vector<Example> batch{{make_window(seq, kRcsFeatureCount), *seq.back().gt, 1.0}};
  const auto before = gradients(params, std::span<const Example>(batch), 6);
  const HeadOutputs out = forward(batch[0].window, params, true, 6);
  const RadarFrame& last = seq.back();
  (void)apply_update_heads(column(last, &RadarPoint::azimuth), column(last, &RadarPoint::radial_velocity),
                           out.static_ini, out.moving_ini, RadarExtrinsics{}, SolverConfig{});
  const auto after = gradients(params, std::span<const Example>(batch), 6);
  CHECK(before.loss == after.loss);
  CHECK(testing::flatten(before.grads) == testing::flatten(after.grads));
}

TEST_CASE("sequence inference predicts every frame that closes a full window") {
  std::mt19937_64 rng(8);
  const Sequence seq = testing::random_sequence(rng, 12, 15, 25);
  const ModelParams<float> params = init_params<float>(testing::tiny_config(), 1);
  const auto preds = infer_sequence(seq, params, 4, RadarExtrinsics{}, SolverConfig{});
  REQUIRE(preds.size() == 9);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    CHECK(preds[k].timestamp == seq[k + 3].timestamp);
    CHECK(preds[k].labels.size() == seq[k + 3].points.size());
    CHECK(preds[k].weights.static_ini.minCoeff() > 0.0);
    CHECK(preds[k].weights.static_ini.maxCoeff() < 1.0);
  }
  const FramePrediction single = infer_window(make_window(std::span(seq).subspan(5, 4), kRcsFeatureCount), params,
                                              RadarExtrinsics{}, SolverConfig{});
  CHECK(single.weights.static_ini == preds[5].weights.static_ini);
  CHECK(single.labels == preds[5].labels);
}
