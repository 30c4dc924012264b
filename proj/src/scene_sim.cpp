// SPDX-License-Identifier: Apache-2.0
#include "egoseg/scene_sim.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace egoseg {

namespace {

constexpr double kPi = std::numbers::pi;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double gaussian(Rng& rng, double mean, double stddev) {
  if (stddev <= 0.0) return mean;
  return std::normal_distribution<double>(mean, stddev)(rng);
}

int poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

Eigen::Matrix2d rotation(double angle) { return Eigen::Rotation2Dd(angle).toRotationMatrix(); }

// Centerline used to place landmarks, parameterized by arc length.
struct PathSample {
  Eigen::Vector2d position;
  double heading = 0.0;
  double arc = 0.0;
};

std::vector<PathSample> build_centerline(const std::vector<Pose2>& poses, double margin) {
  std::vector<PathSample> path;
  const Pose2& first = poses.front();
  const Pose2& last = poses.back();
  const Eigen::Vector2d first_dir(std::cos(first.heading), std::sin(first.heading));
  path.push_back({Eigen::Vector2d(first.x, first.y) - margin * first_dir, first.heading, 0.0});
  for (const Pose2& p : poses) {
    const Eigen::Vector2d pos(p.x, p.y);
    const double step = (pos - path.back().position).norm();
    if (step < 1e-6) continue;
    path.push_back({pos, p.heading, path.back().arc + step});
  }
  const Eigen::Vector2d last_dir(std::cos(last.heading), std::sin(last.heading));
  const Eigen::Vector2d end = Eigen::Vector2d(last.x, last.y) + margin * last_dir;
  path.push_back({end, last.heading, path.back().arc + (end - path.back().position).norm()});
  return path;
}

PathSample sample_centerline(const std::vector<PathSample>& path, double arc) {
  auto it = std::lower_bound(path.begin(), path.end(), arc,
                             [](const PathSample& s, double a) { return s.arc < a; });
  if (it == path.begin()) return path.front();
  if (it == path.end()) return path.back();
  const PathSample& b = *it;
  const PathSample& a = *(it - 1);
  const double f = (arc - a.arc) / std::max(b.arc - a.arc, 1e-12);
  const Eigen::Vector2d d = b.position - a.position;
  return {a.position + f * d, std::atan2(d.y(), d.x()), arc};
}

struct Landmark {
  Eigen::Vector2d position;
  double rcs_mean = 0.0;
};

struct MovingObject {
  std::int64_t id = 0;
  double spawn_time = 0.0;
  Eigen::Vector2d spawn_position;
  Eigen::Vector2d velocity;
  double heading = 0.0;
  double length = 1.0;
  double width = 1.0;
  double rcs_mean = 0.0;
};

// Frame-quantized ego states.
std::vector<EgoMotionState> ego_states(const SceneConfig& config, Rng& rng, std::size_t frames) {
  std::vector<EgoSegment> profile = config.ego_profile;
  if (profile.empty()) {
    double covered = 0.0;
    while (covered < config.duration) {
      EgoSegment seg;
      seg.duration = uniform(rng, config.ego_segment_min, config.ego_segment_max);
      seg.speed = uniform(rng, config.ego_speed_min, config.ego_speed_max);
      seg.yaw_rate = uniform(rng, 0.0, 1.0) < 0.4 ? 0.0
                                                   : uniform(rng, -config.ego_yaw_rate_max, config.ego_yaw_rate_max);
      covered += seg.duration;
      profile.push_back(seg);
    }
  }
  std::vector<EgoMotionState> states;
  states.reserve(frames);
  for (const EgoSegment& seg : profile) {
    const auto n = std::max<long>(1, std::lround(seg.duration * config.frame_rate));
    for (long i = 0; i < n && states.size() < frames; ++i) states.push_back({seg.speed, seg.yaw_rate});
  }
  while (states.size() < frames) states.push_back(states.empty() ? EgoMotionState{} : states.back());
  return states;
}

bool in_fov(const SceneConfig& config, double range, double azimuth) {
  return range >= config.min_range && range <= config.max_range && std::abs(azimuth) <= config.fov_half_angle;
}

enum class Source { kLandmark, kObject, kClutter };

struct Detection {
  RadarPoint point;
  Source source = Source::kClutter;
  std::optional<std::int64_t> object;
};

}  // namespace

std::size_t SceneConfig::frame_count() const {
  return static_cast<std::size_t>(std::floor(duration * frame_rate + 1e-9));
}

double SceneConfig::residual_threshold() const {
  if (gt_residual_threshold >= 0.0) return gt_residual_threshold;
  return std::max(3.0 * sigma_vr, 1e-9);
}

void validate(const SceneConfig& c) {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(key, what);
  };
  require(c.duration > 0.0, "duration", "must be positive");
  require(c.frame_rate > 0.0, "frame_rate", "must be positive");
  require(c.landmark_density >= 0.0, "landmark_density", "must be nonnegative");
  require(c.edge_offset_min >= 0.0 && c.edge_offset_max >= c.edge_offset_min, "edge_offset_min",
          "needs 0 <= edge_offset_min <= edge_offset_max");
  require(c.detection_probability >= 0.0 && c.detection_probability <= 1.0, "detection_probability",
          "must lie in [0, 1]");
  require(c.moving_count >= 0, "moving_count", "must be nonnegative");
  require(c.moving_speed_min >= 0.0 && c.moving_speed_max >= c.moving_speed_min, "moving_speed_min",
          "needs 0 <= moving_speed_min <= moving_speed_max");
  require(c.moving_points_mean >= 0.0, "moving_points_mean", "must be nonnegative");
  require(c.object_length_min > 0.0 && c.object_length_max >= c.object_length_min, "object_length_min",
          "needs 0 < object_length_min <= object_length_max");
  require(c.object_width_min > 0.0 && c.object_width_max >= c.object_width_min, "object_width_min",
          "needs 0 < object_width_min <= object_width_max");
  require(c.false_positive_rate >= 0.0, "false_positive_rate", "must be nonnegative");
  require(c.doppler_span >= 0.0, "doppler_span", "must be nonnegative");
  require(c.sigma_vr >= 0.0, "sigma_vr", "must be nonnegative");
  require(c.sigma_range >= 0.0, "sigma_range", "must be nonnegative");
  require(c.sigma_azimuth >= 0.0, "sigma_azimuth", "must be nonnegative");
  require(c.static_rcs_std >= 0.0 && c.moving_rcs_std >= 0.0 && c.false_positive_rcs_std >= 0.0,
          "static_rcs_std", "rcs spreads must be nonnegative");
  require(c.max_range > 0.0, "max_range", "field of view must have positive range");
  require(c.min_range >= 0.0 && c.min_range < c.max_range, "min_range", "needs 0 <= min_range < max_range");
  require(c.fov_half_angle > 0.0 && c.fov_half_angle <= kPi, "fov_half_angle",
          "field of view must have positive width");
  require(c.extrinsics.x != 0.0, "extrinsics_x", "must be nonzero");
  require(c.ego_speed_max >= c.ego_speed_min, "ego_speed_min", "needs ego_speed_min <= ego_speed_max");
  require(c.ego_yaw_rate_max >= 0.0, "ego_yaw_rate_max", "must be nonnegative");
  require(c.ego_segment_min > 0.0 && c.ego_segment_max >= c.ego_segment_min, "ego_segment_min",
          "needs 0 < ego_segment_min <= ego_segment_max");
  for (const EgoSegment& s : c.ego_profile)
    require(s.duration > 0.0, "ego_profile", "segment durations must be positive");
  require(c.lifespan_min_frames >= 1, "lifespan_min_frames", "must be at least 1");
}

SimulatedSequence simulate_sequence(const SceneConfig& config, std::uint64_t seed) {
  validate(config);
  Rng rng(seed);
  const std::size_t frames = config.frame_count();
  const double dt = 1.0 / config.frame_rate;
  const RadarExtrinsics& extr = config.extrinsics;

  SimulatedSequence out;
  const std::vector<EgoMotionState> ego = ego_states(config, rng, frames);
  out.poses.push_back({});
  for (std::size_t k = 1; k < frames; ++k) out.poses.push_back(advance_pose(out.poses.back(), ego[k - 1], dt));

  // Landmarks along both road edges.
  std::vector<Landmark> landmarks;
  const std::vector<PathSample> centerline = build_centerline(out.poses, config.max_range + 10.0);
  const double path_length = centerline.back().arc;
  for (int side : {-1, 1}) {
    const int count = poisson(rng, config.landmark_density * path_length);
    for (int i = 0; i < count; ++i) {
      const PathSample at = sample_centerline(centerline, uniform(rng, 0.0, path_length));
      const double offset = side * uniform(rng, config.edge_offset_min, config.edge_offset_max);
      const Eigen::Vector2d normal(-std::sin(at.heading), std::cos(at.heading));
      landmarks.push_back({at.position + offset * normal, gaussian(rng, config.static_rcs_mean, config.static_rcs_std)});
    }
  }

  // Moving objects spawn ahead of the ego vehicle, heading along, against
  // or across the road.
  std::vector<MovingObject> objects;
  for (int i = 0; i < config.moving_count; ++i) {
    MovingObject obj;
    obj.id = i;
    obj.spawn_time = uniform(rng, -2.0, config.duration);
    const auto spawn_frame = static_cast<std::size_t>(
        std::clamp(std::floor(std::max(obj.spawn_time, 0.0) / dt), 0.0, static_cast<double>(frames - 1)));
    const Pose2& p = out.poses[spawn_frame];
    const double ahead = uniform(rng, 10.0, 0.9 * config.max_range);
    const double lateral = uniform(rng, -6.0, 6.0);
    obj.spawn_position = Eigen::Vector2d(p.x, p.y) + rotation(p.heading) * Eigen::Vector2d(ahead, lateral);
    const double mode = uniform(rng, 0.0, 1.0);
    const double direction = mode < 0.4 ? 0.0 : (mode < 0.8 ? kPi : (mode < 0.9 ? 0.5 * kPi : -0.5 * kPi));
    obj.heading = p.heading + direction + gaussian(rng, 0.0, 0.05);
    const double speed = uniform(rng, config.moving_speed_min, config.moving_speed_max);
    obj.velocity = speed * Eigen::Vector2d(std::cos(obj.heading), std::sin(obj.heading));
    obj.length = uniform(rng, config.object_length_min, config.object_length_max);
    obj.width = uniform(rng, config.object_width_min, std::min(config.object_width_max, obj.length));
    obj.rcs_mean = gaussian(rng, config.moving_rcs_mean, 0.5 * config.moving_rcs_std);
    objects.push_back(obj);
  }

  const double threshold = config.residual_threshold();
  out.frames.reserve(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Pose2& pose = out.poses[k];
    const Eigen::Matrix2d body = rotation(pose.heading);
    const Eigen::Vector2d radar_pos = Eigen::Vector2d(pose.x, pose.y) + body * Eigen::Vector2d(extr.x, extr.y);
    const Eigen::Matrix2d world_to_radar = rotation(pose.heading + extr.theta).transpose();
    const Eigen::Vector2d radar_vel =
        body * Eigen::Vector2d(ego[k].speed - ego[k].yaw_rate * extr.y, ego[k].yaw_rate * extr.x);

    std::vector<Detection> detections;
    auto measure = [&](const Eigen::Vector2d& world, const Eigen::Vector2d& world_vel, double rcs_mean,
                       double rcs_std, Source source, std::optional<std::int64_t> object) -> bool {
      const Eigen::Vector2d rel = world_to_radar * (world - radar_pos);
      const double range = rel.norm();
      const double azimuth = std::atan2(rel.y(), rel.x());
      if (!in_fov(config, range, azimuth)) return false;
      const Eigen::Vector2d los = (world - radar_pos) / range;
      const double vr = los.dot(world_vel - radar_vel);
      RadarPoint p;
      p.range = std::max(0.0, range + gaussian(rng, 0.0, config.sigma_range));
      p.azimuth = normalize_angle(azimuth + gaussian(rng, 0.0, config.sigma_azimuth));
      p.radial_velocity = vr + gaussian(rng, 0.0, config.sigma_vr);
      p.rcs = gaussian(rng, rcs_mean, rcs_std);
      detections.push_back({p, source, object});
      return true;
    };

    for (const Landmark& lm : landmarks) {
      const Eigen::Vector2d rel = world_to_radar * (lm.position - radar_pos);
      if (!in_fov(config, rel.norm(), std::atan2(rel.y(), rel.x()))) continue;
      if (uniform(rng, 0.0, 1.0) >= config.detection_probability) continue;
      measure(lm.position, Eigen::Vector2d::Zero(), lm.rcs_mean, 2.0, Source::kLandmark, std::nullopt);
    }

    std::vector<ObjectTruth> visible;
    for (const MovingObject& obj : objects) {
      if (t < obj.spawn_time) continue;
      const Eigen::Vector2d center = obj.spawn_position + (t - obj.spawn_time) * obj.velocity;
      const Eigen::Vector2d rel = world_to_radar * (center - radar_pos);
      if (!in_fov(config, rel.norm(), std::atan2(rel.y(), rel.x()))) continue;
      ObjectTruth truth{obj.id, rel, 0};
      const int n = poisson(rng, config.moving_points_mean);
      const Eigen::Matrix2d obj_rot = rotation(obj.heading);
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d local(uniform(rng, -0.5, 0.5) * obj.length, uniform(rng, -0.5, 0.5) * obj.width);
        if (measure(center + obj_rot * local, obj.velocity, obj.rcs_mean, 0.5 * config.moving_rcs_std,
                    Source::kObject, obj.id))
          ++truth.detections;
      }
      visible.push_back(truth);
    }

    const int clutter = poisson(rng, config.false_positive_rate);
    for (int i = 0; i < clutter; ++i) {
      RadarPoint p;
      p.range = uniform(rng, config.min_range, config.max_range);
      p.azimuth = normalize_angle(uniform(rng, -config.fov_half_angle, config.fov_half_angle));
      p.radial_velocity = uniform(rng, -config.doppler_span, config.doppler_span);
      p.rcs = gaussian(rng, config.false_positive_rcs_mean, config.false_positive_rcs_std);
      detections.push_back({p, Source::kClutter, std::nullopt});
    }

    std::shuffle(detections.begin(), detections.end(), rng);

    RadarFrame frame;
    frame.timestamp = t;
    frame.sensor_id = config.sensor_id;
    frame.odom = ego[k];
    GroundTruthLabels labels;
    const RadarMotion radar = vehicle_to_radar(ego[k], extr);
    for (const Detection& d : detections) {
      frame.points.push_back(d.point);
      const double residual = std::abs(d.point.radial_velocity + std::cos(d.point.azimuth) * radar.vx +
                                       std::sin(d.point.azimuth) * radar.vy);
      if (d.source == Source::kLandmark || residual <= threshold) {
        labels.classes.push_back(PointClass::kStatic);
        labels.instances.emplace_back();
      } else if (d.source == Source::kObject) {
        labels.classes.push_back(PointClass::kMoving);
        labels.instances.push_back(d.object);
      } else {
        labels.classes.push_back(PointClass::kFalsePositive);
        labels.instances.emplace_back();
      }
    }
    frame.gt = std::move(labels);
    out.frames.push_back(std::move(frame));
    out.objects.push_back(std::move(visible));
  }

  out.frames = apply_lifespan_filter(std::move(out.frames), config.lifespan_min_frames);
  return out;
}

GroundTruthLabels generate_gt_labels(const RadarFrame& frame, const EgoMotionState& ego,
                                     const RadarExtrinsics& extrinsics, double residual_threshold,
                                     std::span<const std::optional<std::int64_t>> moving_annotations) {
  if (moving_annotations.size() != frame.points.size())
    throw std::invalid_argument("generate_gt_labels: annotation count differs from point count");
  const RadarMotion radar = vehicle_to_radar(ego, extrinsics);
  GroundTruthLabels labels;
  labels.classes.reserve(frame.points.size());
  labels.instances.reserve(frame.points.size());
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const RadarPoint& p = frame.points[i];
    const double residual =
        std::abs(p.radial_velocity + std::cos(p.azimuth) * radar.vx + std::sin(p.azimuth) * radar.vy);
    if (residual <= residual_threshold) {
      labels.classes.push_back(PointClass::kStatic);
      labels.instances.emplace_back();
    } else if (moving_annotations[i]) {
      labels.classes.push_back(PointClass::kMoving);
      labels.instances.push_back(moving_annotations[i]);
    } else {
      labels.classes.push_back(PointClass::kFalsePositive);
      labels.instances.emplace_back();
    }
  }
  return labels;
}

Sequence apply_lifespan_filter(Sequence sequence, int min_frames) {
  std::map<std::int64_t, int> lifespan;
  for (const RadarFrame& f : sequence) {
    if (!f.gt) continue;
    std::vector<std::int64_t> seen;
    for (std::size_t i = 0; i < f.gt->classes.size(); ++i)
      if (f.gt->classes[i] == PointClass::kMoving && f.gt->instances[i]) seen.push_back(*f.gt->instances[i]);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (std::int64_t id : seen) ++lifespan[id];
  }
  for (RadarFrame& f : sequence) {
    if (!f.gt) continue;
    for (std::size_t i = 0; i < f.gt->classes.size(); ++i) {
      if (f.gt->classes[i] != PointClass::kMoving || !f.gt->instances[i]) continue;
      if (lifespan[*f.gt->instances[i]] < min_frames) {
        f.gt->classes[i] = PointClass::kFalsePositive;
        f.gt->instances[i].reset();
      }
    }
  }
  return sequence;
}

}  // namespace egoseg
