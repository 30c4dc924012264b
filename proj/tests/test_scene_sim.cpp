// SPDX-License-Identifier: Apache-2.0
#include "egoseg/scene_sim.hpp"
#include "egoseg/sequence_io.hpp"

#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <set>
#include <sstream>

using namespace egoseg;

namespace {

SceneConfig noise_free() {
  SceneConfig c;
  c.duration = 3.0;
  c.sigma_vr = 0.0;
  c.sigma_range = 0.0;
  c.sigma_azimuth = 0.0;
  return c;
}

std::vector<std::optional<std::int64_t>> annotations_of(const RadarFrame& f) {
  return f.gt->instances;
}

}  // namespace

TEST_CASE("frame count follows duration and rate") {
  SceneConfig c;
  c.duration = 12.0;
  c.frame_rate = 16.7;
  CHECK(c.frame_count() == 200);
  const SimulatedSequence s = simulate_sequence(noise_free(), 1);
  CHECK(s.frames.size() == noise_free().frame_count());
  CHECK(s.poses.size() == s.frames.size());
  CHECK(validate_sequence(s.frames).empty());
}

TEST_CASE("stationary ego with nothing moving sees zero Doppler on statics") {
  SceneConfig c = noise_free();
  c.ego_profile = {{3.0, 0.0, 0.0}};
  c.moving_count = 0;
  c.false_positive_rate = 0.0;
  const SimulatedSequence s = simulate_sequence(c, 4);
  std::size_t seen = 0;
  for (const RadarFrame& f : s.frames)
    for (const RadarPoint& p : f.points) {
      CHECK(std::abs(p.radial_velocity) < 1e-12);
      ++seen;
    }
  CHECK(seen > 0);
}

TEST_CASE("a landmark dead ahead closes at the ego speed") {
  SceneConfig c = noise_free();
  c.ego_profile = {{3.0, 10.0, 0.0}};
  c.extrinsics = {3.6, 0.0, 0.0};
  c.moving_count = 0;
  c.false_positive_rate = 0.0;
  const SimulatedSequence s = simulate_sequence(c, 11);
  for (const RadarFrame& f : s.frames)
    for (const RadarPoint& p : f.points)
      CHECK(p.radial_velocity == doctest::Approx(-10.0 * std::cos(p.azimuth)).epsilon(1e-12));
}

TEST_CASE("same seed gives bit-identical sequences, another seed differs") {
  const SceneConfig c;
  std::ostringstream a, b, d;
  write_sequence(a, simulate_sequence(c, 42).frames);
  write_sequence(b, simulate_sequence(c, 42).frames);
  write_sequence(d, simulate_sequence(c, 43).frames);
  CHECK(a.str() == b.str());
  CHECK(a.str() != d.str());
}

TEST_CASE("noise-free static points lie on one Doppler sinusoid") {
  const SimulatedSequence s = simulate_sequence(noise_free(), 7);
  for (const RadarFrame& f : s.frames) {
    std::vector<double> az, vr;
    for (std::size_t i = 0; i < f.points.size(); ++i)
      if (f.gt->classes[i] == PointClass::kStatic) {
        az.push_back(f.points[i].azimuth);
        vr.push_back(f.points[i].radial_velocity);
      }
    if (az.size() < 3) continue;
    const Eigen::Map<const Eigen::VectorXd> a(az.data(), static_cast<Eigen::Index>(az.size()));
    const Eigen::Map<const Eigen::VectorXd> v(vr.data(), static_cast<Eigen::Index>(vr.size()));
    const RadarMotion fit = solve_wlsq(a, v, Eigen::VectorXd::Ones(a.size()).eval());
    CHECK(doppler_residuals(a, v, fit).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("relabeling noise-free output reproduces the simulator's classes") {
  const SimulatedSequence s = simulate_sequence(noise_free(), 13);
  const SceneConfig c = noise_free();
  std::size_t moving = 0;
  for (const RadarFrame& f : s.frames) {
    // Annotations are the instance ids before lifespan filtering; filtered
    // points carry none, so compare against the filtered labels directly.
    const GroundTruthLabels relabeled = generate_gt_labels(f, *f.odom, c.extrinsics, 1e-9, annotations_of(f));
    CHECK(relabeled == *f.gt);
    moving += static_cast<std::size_t>(std::count(f.gt->classes.begin(), f.gt->classes.end(), PointClass::kMoving));
  }
  CHECK(moving > 0);
}

TEST_CASE("labeling rules") {
  RadarFrame f;
  f.points = {{10.0, 0.0, -5.0, {}}, {10.0, 0.0, -2.0, {}}, {10.0, 0.0, -5.0, {}}, {10.0, 0.0, 1.0, {}}};
  const RadarExtrinsics e{1.0, 0.0, 0.0};
  const std::vector<std::optional<std::int64_t>> ann{std::nullopt, 3, 4, std::nullopt};
  const GroundTruthLabels gt = generate_gt_labels(f, EgoMotionState{5.0, 0.0}, e, 0.039, ann);
  CHECK(gt.classes[0] == PointClass::kStatic);
  CHECK(gt.classes[1] == PointClass::kMoving);  // residual 3 m/s
  CHECK(gt.instances[1] == 3);
  CHECK(gt.classes[2] == PointClass::kStatic);  // annotated but not moving
  CHECK(!gt.instances[2]);
  CHECK(gt.classes[3] == PointClass::kFalsePositive);
}

TEST_CASE("lifespan filter boundary") {
  auto make = [](int lifespan) {
    Sequence seq;
    for (int k = 0; k < 8; ++k) {
      RadarFrame f;
      f.timestamp = 0.06 * k;
      f.points = {{5.0, 0.0, 1.0, {}}, {6.0, 0.1, 0.0, {}}};
      const bool present = k < lifespan;
      f.gt = GroundTruthLabels{{present ? PointClass::kMoving : PointClass::kFalsePositive, PointClass::kStatic},
                               {present ? std::optional<std::int64_t>(1) : std::nullopt, std::nullopt}};
      seq.push_back(f);
    }
    return seq;
  };
  const Sequence four = apply_lifespan_filter(make(4), 5);
  for (const RadarFrame& f : four) {
    CHECK(f.gt->classes[0] == PointClass::kFalsePositive);
    CHECK(!f.gt->instances[0]);
    CHECK(f.gt->classes[1] == PointClass::kStatic);
  }
  const Sequence five = make(5);
  CHECK(apply_lifespan_filter(five, 5) == five);
  const Sequence three = make(3);
  CHECK(apply_lifespan_filter(three, 1) == three);
}

TEST_CASE("simulated moving instances all survive the default lifespan") {
  const SimulatedSequence s = simulate_sequence(SceneConfig{}, 21);
  std::map<std::int64_t, std::set<std::size_t>> frames_of;
  for (std::size_t k = 0; k < s.frames.size(); ++k)
    for (const auto& id : s.frames[k].gt->instances)
      if (id) frames_of[*id].insert(k);
  CHECK(!frames_of.empty());
  for (const auto& [id, frames] : frames_of) CHECK(frames.size() >= 5);
}

TEST_CASE("invalid configs name the offending field") {
  auto key_of = [](SceneConfig c) -> std::string {
    try {
      validate(c);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return "";
  };
  SceneConfig c;
  CHECK(key_of(c).empty());
  c.duration = -1.0;
  CHECK(key_of(c) == "duration");
  c = {};
  c.max_range = 0.0;
  CHECK(key_of(c) == "max_range");
  c = {};
  c.fov_half_angle = 0.0;
  CHECK(key_of(c) == "fov_half_angle");
  c = {};
  c.sigma_vr = -0.1;
  CHECK(key_of(c) == "sigma_vr");
  c = {};
  c.extrinsics.x = 0.0;
  CHECK(key_of(c) == "extrinsics_x");
  c = {};
  c.false_positive_rate = -1.0;
  CHECK_THROWS_AS(simulate_sequence(c, 1), ConfigError);
}

TEST_CASE("residual threshold defaults to three sigma") {
  SceneConfig c;
  CHECK(c.residual_threshold() == doctest::Approx(0.039));
  c.gt_residual_threshold = 0.2;
  CHECK(c.residual_threshold() == 0.2);
}
