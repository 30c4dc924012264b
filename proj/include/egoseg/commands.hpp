// SPDX-License-Identifier: Apache-2.0
//
// Operator commands. Each throws on failure; the executable maps exceptions
// to a nonzero exit status.
#pragma once

#include "egoseg/config.hpp"
#include "egoseg/evaluation.hpp"
#include "egoseg/model_io.hpp"
#include "egoseg/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace egoseg {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

struct DatasetEntry {
  std::string name;
  std::filesystem::path file;
  std::string split = "train";
  double sample_weight = 1.0;
  RadarExtrinsics extrinsics;
};

/// A directory with manifest.json, a directory of *.jsonl files (sorted by
/// name, split "train", extrinsics from `config`), or a single *.jsonl file.
std::vector<DatasetEntry> open_dataset(const std::filesystem::path& path, const RunConfig& config);

/// Entries whose split equals `split`; "all" keeps every entry.
std::vector<DatasetEntry> select_split(const std::vector<DatasetEntry>& entries, std::string_view split);

/// Runs body(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body);

/// dataset.sequences sequences (seed derived per index) plus manifest.json.
nlohmann::json cmd_simulate(const RunConfig& config, const std::filesystem::path& out_dir, int jobs = 1);

/// Relabels from odometry (per frame "odom", or `odometry`: a CSV file of
/// "timestamp,speed,yaw_rate" rows, or a directory holding <name>.odom.csv)
/// and moving-instance annotations ("gt.inst"), then applies the lifespan
/// filter. Writes the same layout to `out_dir`.
void cmd_gt_label(const RunConfig& config, const std::filesystem::path& data,
                  const std::optional<std::filesystem::path>& odometry, const std::filesystem::path& out_dir,
                  int jobs = 1);

/// Trains on the `split` entries; writes the model and a CSV log
/// (epoch,loss,lr) next to it (`<model>.log.csv`).
TrainResult cmd_train(const RunConfig& config, const std::filesystem::path& data, std::string_view split,
                      const std::filesystem::path& model_path,
                      const std::function<void(const EpochLog&)>& on_epoch = {});

/// Writes <out_dir>/<name>.pred.jsonl per sequence and predictions.json.
void cmd_infer(const RunConfig& config, const std::filesystem::path& model_path, const std::filesystem::path& data,
               std::string_view split, const std::filesystem::path& out_dir, int jobs = 1);

/// Metrics JSON of the `split` entries against <predictions>/<name>.pred.jsonl;
/// also written to `out` when non-empty.
nlohmann::json cmd_eval(const RunConfig& config, const std::filesystem::path& data, std::string_view split,
                        const std::filesystem::path& predictions, const std::filesystem::path& out, int jobs = 1);

/// Static map and trajectories of one sequence. With predictions the map
/// uses predicted labels and ego-motion; without, ground-truth labels and
/// odometry. Writes map.csv, trajectory.csv and map.svg into `out_dir`.
void cmd_map(const RunConfig& config, const std::filesystem::path& data, const std::string& sequence,
             const std::optional<std::filesystem::path>& predictions, const std::filesystem::path& out_dir);

}  // namespace egoseg
