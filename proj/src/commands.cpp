// SPDX-License-Identifier: Apache-2.0
#include "egoseg/commands.hpp"

#include "egoseg/mapping.hpp"
#include "egoseg/prediction_io.hpp"
#include "egoseg/random.hpp"
#include "egoseg/scene_sim.hpp"
#include "egoseg/sequence_io.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace egoseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error(fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

json extrinsics_json(const RadarExtrinsics& e) { return json{e.x, e.y, e.theta}; }

RadarExtrinsics extrinsics_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("extrinsics must be [x, y, theta]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

const DatasetEntry& find_entry(const std::vector<DatasetEntry>& entries, const std::string& name) {
  if (name.empty() && entries.size() == 1) return entries.front();
  for (const DatasetEntry& e : entries)
    if (e.name == name) return e;
  throw std::invalid_argument(fmt::format("no sequence named '{}' in the dataset", name));
}

fs::path prediction_path(const fs::path& dir, const std::string& name) { return dir / (name + ".pred.jsonl"); }

// Timestamped odometry samples with linear interpolation.
class OdometryTrack {
 public:
  explicit OdometryTrack(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open odometry '{}'", path.string()));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream fields(line);
      double t = 0.0, v = 0.0, w = 0.0;
      if (!(fields >> t >> v >> w)) {
        if (line_no == 1) continue;  // header
        throw FormatError(fmt::format("{}:{}: expected timestamp,speed,yaw_rate", path.string(), line_no));
      }
      if (!samples_.empty() && !(t > samples_.back().timestamp))
        throw FormatError(fmt::format("{}:{}: timestamps must increase", path.string(), line_no));
      samples_.push_back({{v, w}, t});
    }
    if (samples_.empty()) throw FormatError(fmt::format("odometry '{}' holds no samples", path.string()));
  }

  EgoMotionState at(double t) const {
    constexpr double kTolerance = 1e-9;
    if (t < samples_.front().timestamp - kTolerance || t > samples_.back().timestamp + kTolerance)
      throw std::invalid_argument(fmt::format("no odometry covers timestamp {}", t));
    const auto upper = std::lower_bound(samples_.begin(), samples_.end(), t,
                                        [](const TimedMotion& s, double x) { return s.timestamp < x; });
    if (upper == samples_.begin()) return samples_.front().motion;
    if (upper == samples_.end()) return samples_.back().motion;
    const TimedMotion& a = *(upper - 1);
    const TimedMotion& b = *upper;
    const double u = (t - a.timestamp) / (b.timestamp - a.timestamp);
    return {a.motion.speed + u * (b.motion.speed - a.motion.speed),
            a.motion.yaw_rate + u * (b.motion.yaw_rate - a.motion.yaw_rate)};
  }

 private:
  std::vector<TimedMotion> samples_;
};

}  // namespace

std::vector<DatasetEntry> open_dataset(const fs::path& path, const RunConfig& config) {
  std::vector<DatasetEntry> entries;
  if (fs::is_regular_file(path)) {
    entries.push_back({path.stem().string(), path, "train", 1.0, config.scene.extrinsics});
    return entries;
  }
  if (!fs::is_directory(path)) throw std::runtime_error(fmt::format("dataset '{}' does not exist", path.string()));
  const fs::path manifest_path = path / kManifestName;
  if (fs::exists(manifest_path)) {
    const json manifest = read_json_file(manifest_path);
    if (manifest.value("v", -1) != kManifestVersion)
      throw FormatError(fmt::format("unsupported manifest version in '{}'", manifest_path.string()));
    try {
      for (const json& s : manifest.at("sequences")) {
        DatasetEntry e;
        e.name = s.at("name").get<std::string>();
        e.file = path / s.at("file").get<std::string>();
        e.split = s.value("split", "train");
        e.sample_weight = s.value("sample_weight", 1.0);
        e.extrinsics = s.contains("extrinsics") ? extrinsics_from(s.at("extrinsics")) : config.scene.extrinsics;
        entries.push_back(std::move(e));
      }
    } catch (const json::exception& e) {
      throw FormatError(fmt::format("{}: {}", manifest_path.string(), e.what()));
    }
    return entries;
  }
  for (const auto& item : fs::directory_iterator(path))
    if (item.is_regular_file() && item.path().extension() == ".jsonl" &&
        item.path().string().find(".pred.") == std::string::npos)
      entries.push_back({item.path().stem().string(), item.path(), "train", 1.0, config.scene.extrinsics});
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  if (entries.empty()) throw std::runtime_error(fmt::format("no sequences found in '{}'", path.string()));
  return entries;
}

std::vector<DatasetEntry> select_split(const std::vector<DatasetEntry>& entries, std::string_view split) {
  std::vector<DatasetEntry> out;
  for (const DatasetEntry& e : entries)
    if (split == "all" || e.split == split) out.push_back(e);
  if (out.empty()) throw std::invalid_argument(fmt::format("dataset has no sequences in split '{}'", split));
  return out;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (std::thread& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

json cmd_simulate(const RunConfig& config, const fs::path& out_dir, int jobs) {
  validate(config);
  ensure_directory(out_dir);
  const auto count = static_cast<std::size_t>(config.dataset.sequences);
  const std::size_t first_test = count - static_cast<std::size_t>(config.dataset.holdout);
  std::vector<json> records(count);
  std::vector<std::array<std::size_t, 4>> tallies(count);

  parallel_for(count, jobs, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(config.seed, i);
    const SimulatedSequence sim = simulate_sequence(config.scene, seed);
    const std::string name = fmt::format("seq_{:04d}", i);
    write_sequence(out_dir / (name + ".jsonl"), sim.frames);
    std::array<std::size_t, 4> tally{};
    for (const RadarFrame& f : sim.frames) {
      tally[3] += f.size();
      for (PointClass c : f.gt->classes) ++tally[static_cast<std::size_t>(c)];
    }
    tallies[i] = tally;
    records[i] = {{"name", name},
                  {"file", name + ".jsonl"},
                  {"split", i < first_test ? "train" : "test"},
                  {"seed", seed},
                  {"frames", sim.frames.size()},
                  {"points", tally[3]},
                  {"sample_weight", 1.0},
                  {"extrinsics", extrinsics_json(config.scene.extrinsics)}};
    spdlog::debug("simulated {} ({} frames, {} points)", name, sim.frames.size(), tally[3]);
  });

  std::array<std::size_t, 4> total{};
  for (const auto& t : tallies)
    for (std::size_t k = 0; k < 4; ++k) total[k] += t[k];
  json cfg = json::object();
  for (const auto& [key, value] : entries(config)) cfg[key] = value;
  json manifest = {{"v", kManifestVersion},
                   {"seed", config.seed},
                   {"config_hash", hex64(fnv1a(to_text(config)))},
                   {"config", std::move(cfg)},
                   {"frames_per_sequence", config.scene.frame_count()},
                   {"counts",
                    {{"sequences", count},
                     {"frames", count * config.scene.frame_count()},
                     {"points", total[3]},
                     {"static", total[0]},
                     {"moving", total[1]},
                     {"false_positive", total[2]}}},
                   {"sequences", records}};
  write_text_file(out_dir / kManifestName, manifest.dump(2) + "\n");
  spdlog::info("wrote {} sequences to {}", count, out_dir.string());
  return manifest;
}

void cmd_gt_label(const RunConfig& config, const fs::path& data, const std::optional<fs::path>& odometry,
                  const fs::path& out_dir, int jobs) {
  validate(config);
  const std::vector<DatasetEntry> dataset = open_dataset(data, config);
  ensure_directory(out_dir);
  const double threshold = config.scene.residual_threshold();

  parallel_for(dataset.size(), jobs, [&](std::size_t i) {
    const DatasetEntry& entry = dataset[i];
    Sequence seq = read_sequence(entry.file);
    std::optional<OdometryTrack> track;
    if (odometry) track.emplace(fs::is_directory(*odometry) ? *odometry / (entry.name + ".odom.csv") : *odometry);
    for (std::size_t k = 0; k < seq.size(); ++k) {
      RadarFrame& f = seq[k];
      if (track) f.odom = track->at(f.timestamp);
      if (!f.odom)
        throw std::invalid_argument(
            fmt::format("{}: frame {} has no odometry and no odometry file was given", entry.name, k));
      std::vector<std::optional<std::int64_t>> annotations(f.size());
      if (f.annotations)
        annotations = *f.annotations;
      else if (f.gt)
        annotations = f.gt->instances;
      f.gt = generate_gt_labels(f, *f.odom, entry.extrinsics, threshold, annotations);
      f.annotations.reset();
    }
    seq = apply_lifespan_filter(std::move(seq), config.scene.lifespan_min_frames);
    write_sequence(out_dir / entry.file.filename(), seq);
  });

  if (fs::is_directory(data) && fs::exists(data / kManifestName)) {
    json manifest = read_json_file(data / kManifestName);
    manifest["relabeled"] = {{"residual_threshold", threshold},
                             {"lifespan_min_frames", config.scene.lifespan_min_frames}};
    write_text_file(out_dir / kManifestName, manifest.dump(2) + "\n");
  }
  spdlog::info("relabeled {} sequences into {}", dataset.size(), out_dir.string());
}

TrainResult cmd_train(const RunConfig& config, const fs::path& data, std::string_view split,
                      const fs::path& model_path, const std::function<void(const EpochLog&)>& on_epoch) {
  validate(config);
  const std::vector<DatasetEntry> entries = select_split(open_dataset(data, config), split);
  std::vector<Sequence> sequences;
  std::vector<double> weights;
  for (const DatasetEntry& e : entries) {
    sequences.push_back(read_sequence(e.file));
    weights.push_back(e.sample_weight);
  }
  const TrainingSet set(sequences, weights, config.model.feature_count, config.window_length, config.train);
  spdlog::info("training on {} windows from {} sequences (T={})", set.size(), sequences.size(),
               config.window_length);
  TrainResult result = train(set, config.model, config.train, on_epoch);

  if (model_path.has_parent_path()) ensure_directory(model_path.parent_path());
  write_model(model_path, {result.params, config.window_length});
  std::string log = "epoch,loss,lr\n";
  for (const EpochLog& e : result.log) log += fmt::format("{},{},{}\n", e.epoch, e.loss, e.learning_rate);
  write_text_file(fs::path(model_path.string() + ".log.csv"), log);
  spdlog::info("best epoch {} of {}, model written to {}", result.best_epoch, result.log.size(),
               model_path.string());
  return result;
}

void cmd_infer(const RunConfig& config, const fs::path& model_path, const fs::path& data, std::string_view split,
               const fs::path& out_dir, int jobs) {
  validate(config);
  const ModelFile model = read_model(model_path);
  const std::vector<DatasetEntry> entries = select_split(open_dataset(data, config), split);
  ensure_directory(out_dir);
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const DatasetEntry& e = entries[i];
    const Sequence seq = read_sequence(e.file);
    const auto predictions = infer_sequence(seq, model.params, model.window_length, e.extrinsics, config.solver);
    write_predictions(prediction_path(out_dir, e.name), predictions);
    spdlog::debug("{}: {} predicted frames", e.name, predictions.size());
  });
  json index = {{"v", kPredictionFormatVersion},
                {"window_length", model.window_length},
                {"sequences", json::array()}};
  for (const DatasetEntry& e : entries) index["sequences"].push_back(e.name);
  write_text_file(out_dir / "predictions.json", index.dump(2) + "\n");
  spdlog::info("wrote predictions for {} sequences to {}", entries.size(), out_dir.string());
}

json cmd_eval(const RunConfig& config, const fs::path& data, std::string_view split, const fs::path& predictions,
              const fs::path& out, int jobs) {
  validate(config);
  const std::vector<DatasetEntry> entries = select_split(open_dataset(data, config), split);
  EvaluationConfig eval{config.cluster, config.s_rmse, config.rte, std::nullopt};
  if (config.eval_first_frame >= 0) eval.first_frame = static_cast<std::size_t>(config.eval_first_frame);
  std::vector<SequenceEvaluation> results(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const Sequence seq = read_sequence(entries[i].file);
    const auto preds = read_predictions(prediction_path(predictions, entries[i].name));
    results[i] = evaluate_sequence(seq, preds, eval, entries[i].name);
  });
  const json report = to_json(aggregate(std::move(results), eval));
  if (!out.empty()) {
    if (out.has_parent_path()) ensure_directory(out.parent_path());
    write_text_file(out, report.dump(2) + "\n");
  }
  return report;
}

void cmd_map(const RunConfig& config, const fs::path& data, const std::string& sequence,
             const std::optional<fs::path>& predictions, const fs::path& out_dir) {
  validate(config);
  const std::vector<DatasetEntry> entries = open_dataset(data, config);
  const DatasetEntry& entry = find_entry(entries, sequence);
  const Sequence seq = read_sequence(entry.file);
  if (seq.empty()) throw std::invalid_argument(fmt::format("sequence '{}' is empty", entry.name));

  std::vector<TimedMotion> odom;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    if (!seq[k].odom) throw std::invalid_argument(fmt::format("{}: frame {} has no odometry", entry.name, k));
    odom.push_back({*seq[k].odom, seq[k].timestamp});
  }
  const std::vector<Pose2> gt_poses = integrate_trajectory(odom);

  std::size_t first = 0;
  std::vector<std::vector<PointClass>> labels;
  std::vector<Pose2> est_poses;
  if (predictions) {
    const auto preds = read_predictions(prediction_path(*predictions, entry.name));
    if (preds.empty()) throw std::invalid_argument(fmt::format("no predictions for '{}'", entry.name));
    while (first < seq.size() && seq[first].timestamp != preds.front().timestamp) ++first;
    if (first == seq.size() || seq.size() - first != preds.size())
      throw std::invalid_argument(fmt::format("predictions do not align with the frames of '{}'", entry.name));
    std::vector<TimedMotion> est;
    const auto valid = std::find_if(preds.begin(), preds.end(), [](const FramePrediction& p) { return p.ego; });
    EgoMotionState held = valid == preds.end() ? EgoMotionState{} : *valid->ego;
    for (const FramePrediction& p : preds) {
      if (p.ego) held = *p.ego;
      est.push_back({held, p.timestamp});
      labels.push_back(p.labels);
    }
    est_poses = integrate_trajectory(est, gt_poses[first]);
  } else {
    for (const RadarFrame& f : seq) {
      if (!f.gt) throw std::invalid_argument(fmt::format("{}: frames lack labels and no predictions were given", entry.name));
      labels.push_back(f.gt->classes);
    }
    est_poses = gt_poses;
  }

  const std::span<const RadarFrame> frames = std::span<const RadarFrame>(seq).subspan(first);
  const std::vector<MapPoint> map = accumulate_static_map(frames, labels, est_poses, entry.extrinsics);

  ensure_directory(out_dir);
  std::string csv = "frame,t,x,y\n";
  for (const MapPoint& p : map)
    csv += fmt::format("{},{},{},{}\n", first + p.frame, frames[p.frame].timestamp, p.position.x(), p.position.y());
  write_text_file(out_dir / "map.csv", csv);
  std::string traj = "t,gt_x,gt_y,gt_heading,est_x,est_y,est_heading\n";
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Pose2& g = gt_poses[first + k];
    const Pose2& e = est_poses[k];
    traj += fmt::format("{},{},{},{},{},{},{}\n", frames[k].timestamp, g.x, g.y, g.heading, e.x, e.y, e.heading);
  }
  write_text_file(out_dir / "trajectory.csv", traj);

  std::vector<SvgLayer> layers(3);
  layers[0] = {"static map", "#9a9a9a", {}, false};
  layers[1] = {"ground-truth trajectory", "#1a9641", {}, true};
  layers[2] = {predictions ? "estimated trajectory" : "odometry trajectory", "#d7191c", {}, true};
  for (const MapPoint& p : map) layers[0].points.push_back(p.position);
  for (std::size_t k = first; k < gt_poses.size(); ++k) layers[1].points.emplace_back(gt_poses[k].x, gt_poses[k].y);
  for (const Pose2& p : est_poses) layers[2].points.emplace_back(p.x, p.y);
  std::ostringstream svg;
  write_svg(svg, layers);
  write_text_file(out_dir / "map.svg", svg.str());
  spdlog::info("map of '{}' with {} static points written to {}", entry.name, map.size(), out_dir.string());
}

}  // namespace egoseg
