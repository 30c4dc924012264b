// SPDX-License-Identifier: Apache-2.0
#include "egoseg/evaluation.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_map>

namespace egoseg {

namespace {

constexpr double kCmPerM = 100.0;
constexpr double kDegPerRad = 180.0 / std::numbers::pi;

Eigen::Matrix2Xd moving_centroids(const Eigen::Matrix2Xd& positions, std::span<const PointClass> classes,
                                  const ClusterConfig& config) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == PointClass::kMoving) idx.push_back(static_cast<Eigen::Index>(i));
  Eigen::Matrix2Xd moving(2, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) moving.col(static_cast<Eigen::Index>(i)) = positions.col(idx[i]);
  return clusters_to_centroids(moving, dbscan(moving, config));
}

std::optional<double> maybe_s_rmse(const std::vector<double>& truth, const std::vector<double>& estimate,
                                   double c_err, double s) {
  if (truth.empty()) return std::nullopt;
  return s_rmse(truth, estimate, c_err, s);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

InstanceReport evaluate_instances(const RadarFrame& frame, std::span<const PointClass> predicted,
                                  const ClusterConfig& config) {
  if (!frame.gt) throw std::invalid_argument("evaluate_instances: frame has no labels");
  if (predicted.size() != frame.size()) throw std::invalid_argument("evaluate_instances: label count mismatch");
  const Eigen::Matrix2Xd positions = point_positions(frame);
  return associate(moving_centroids(positions, frame.gt->classes, config),
                   moving_centroids(positions, predicted, config), config.gate);
}

SequenceEvaluation evaluate_sequence(std::span<const RadarFrame> frames, std::span<const FramePrediction> predictions,
                                     const EvaluationConfig& config, std::string name) {
  SequenceEvaluation out;
  out.name = std::move(name);
  std::unordered_map<double, const FramePrediction*> by_time;
  for (const FramePrediction& p : predictions) by_time.emplace(p.timestamp, &p);

  std::size_t first = frames.size();
  if (config.first_frame) {
    first = *config.first_frame;
  } else {
    for (std::size_t k = 0; k < frames.size() && first == frames.size(); ++k)
      if (by_time.contains(frames[k].timestamp)) first = k;
  }

  std::vector<const FramePrediction*> scored;
  std::vector<const RadarFrame*> scored_frames;
  for (std::size_t k = first; k < frames.size(); ++k) {
    const RadarFrame& f = frames[k];
    if (!f.gt) throw std::invalid_argument(fmt::format("evaluate: frame {} of '{}' has no labels", k, out.name));
    const auto it = by_time.find(f.timestamp);
    if (it == by_time.end())
      throw std::invalid_argument(fmt::format("evaluate: no prediction for frame {} (t={}) of '{}'", k, f.timestamp,
                                              out.name));
    const InstanceReport r = evaluate_instances(f, it->second->labels, config.cluster);
    out.tp += r.tp;
    out.fp += r.fp;
    out.fn += r.fn;
    scored.push_back(it->second);
    scored_frames.push_back(&f);
  }
  out.frames = scored.size();
  out.scores = detection_scores(out.tp, out.fp, out.fn);

  const bool have_odom =
      !scored_frames.empty() && std::all_of(scored_frames.begin(), scored_frames.end(),
                                            [](const RadarFrame* f) { return f->odom.has_value(); });
  const auto first_valid = std::find_if(scored.begin(), scored.end(), [](const FramePrediction* p) { return p->ego; });
  out.flagged_frames = static_cast<std::size_t>(
      std::count_if(scored.begin(), scored.end(), [](const FramePrediction* p) { return !p->ego; }));
  if (!have_odom || first_valid == scored.end()) return out;

  std::vector<TimedMotion> truth, estimate;
  EgoMotionState held = *(*first_valid)->ego;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i]->ego) held = *scored[i]->ego;
    const EgoMotionState& gt = *scored_frames[i]->odom;
    truth.push_back({gt, scored_frames[i]->timestamp});
    estimate.push_back({held, scored_frames[i]->timestamp});
    out.speed_truth.push_back(gt.speed * kCmPerM);
    out.speed_estimate.push_back(held.speed * kCmPerM);
    out.yaw_rate_truth.push_back(gt.yaw_rate * kDegPerRad);
    out.yaw_rate_estimate.push_back(held.yaw_rate * kDegPerRad);
  }
  out.s_rmse_speed = maybe_s_rmse(out.speed_truth, out.speed_estimate, config.s_rmse.speed_c_err, config.s_rmse.speed_s);
  out.s_rmse_yaw_rate = maybe_s_rmse(out.yaw_rate_truth, out.yaw_rate_estimate, config.s_rmse.yaw_rate_c_err,
                                     config.s_rmse.yaw_rate_s);
  try {
    const std::vector<Pose2> poses = integrate_trajectory(truth);
    RteResult rte = relative_trajectory_error(poses, estimate, config.rte);
    out.rte = rte.mean;
    out.rte_segments = std::move(rte.segment_errors);
  } catch (const TrajectoryTooShortError&) {
  }
  return out;
}

EvaluationReport aggregate(std::vector<SequenceEvaluation> sequences, const EvaluationConfig& config) {
  EvaluationReport report;
  std::vector<double> st, se, yt, ye, segments;
  for (const SequenceEvaluation& s : sequences) {
    report.tp += s.tp;
    report.fp += s.fp;
    report.fn += s.fn;
    st.insert(st.end(), s.speed_truth.begin(), s.speed_truth.end());
    se.insert(se.end(), s.speed_estimate.begin(), s.speed_estimate.end());
    yt.insert(yt.end(), s.yaw_rate_truth.begin(), s.yaw_rate_truth.end());
    ye.insert(ye.end(), s.yaw_rate_estimate.begin(), s.yaw_rate_estimate.end());
    segments.insert(segments.end(), s.rte_segments.begin(), s.rte_segments.end());
  }
  report.scores = detection_scores(report.tp, report.fp, report.fn);
  report.s_rmse_speed = maybe_s_rmse(st, se, config.s_rmse.speed_c_err, config.s_rmse.speed_s);
  report.s_rmse_yaw_rate = maybe_s_rmse(yt, ye, config.s_rmse.yaw_rate_c_err, config.s_rmse.yaw_rate_s);
  if (!segments.empty())
    report.rte = std::accumulate(segments.begin(), segments.end(), 0.0) / static_cast<double>(segments.size());
  report.per_sequence = std::move(sequences);
  return report;
}

nlohmann::json to_json(const EvaluationReport& report) {
  using nlohmann::json;
  auto scores_json = [](json& j, const DetectionScores& s) {
    j["fdr"] = optional_json(s.fdr);
    j["mdr"] = optional_json(s.mdr);
    j["f1"] = optional_json(s.f1);
    j["iou"] = optional_json(s.iou);
  };
  json j;
  j["v"] = 1;
  scores_json(j, report.scores);
  j["s_rmse_vx_cm_s"] = optional_json(report.s_rmse_speed);
  j["s_rmse_omega_deg_s"] = optional_json(report.s_rmse_yaw_rate);
  j["rte_50_m"] = optional_json(report.rte);
  j["counts"] = {{"tp", report.tp}, {"fp", report.fp}, {"fn", report.fn}};
  json per = json::array();
  for (const SequenceEvaluation& s : report.per_sequence) {
    json e;
    e["name"] = s.name;
    e["frames"] = s.frames;
    e["flagged_frames"] = s.flagged_frames;
    scores_json(e, s.scores);
    e["s_rmse_vx_cm_s"] = optional_json(s.s_rmse_speed);
    e["s_rmse_omega_deg_s"] = optional_json(s.s_rmse_yaw_rate);
    e["rte_50_m"] = optional_json(s.rte);
    e["rte_segments"] = s.rte_segments.size();
    e["counts"] = {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}};
    per.push_back(std::move(e));
  }
  j["per_sequence"] = std::move(per);
  return j;
}

}  // namespace egoseg
