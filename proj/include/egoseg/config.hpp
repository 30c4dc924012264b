// SPDX-License-Identifier: Apache-2.0
//
// Flat key = value run configuration. Keys are "<section>.<field>";
// later assignments win, so command-line overrides applied after the file
// take precedence over it, and both over the defaults.
#pragma once

#include "egoseg/ego_solver.hpp"
#include "egoseg/errors.hpp"
#include "egoseg/instance.hpp"
#include "egoseg/metrics.hpp"
#include "egoseg/network.hpp"
#include "egoseg/scene_sim.hpp"
#include "egoseg/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace egoseg {

struct DatasetConfig {
  int sequences = 45;   // simulated sequences
  int holdout = 5;      // the last `holdout` are the test split
};

struct RunConfig {
  SceneConfig scene;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  SolverConfig solver;
  ClusterConfig cluster;
  SRmseConfig s_rmse;
  RteOptions rte;
  std::size_t window_length = 8;
  long eval_first_frame = -1;  // negative: score from the first predicted frame
  std::uint64_t seed = 1;
};

/// Assigns one key; throws ConfigError naming the key on an unknown key or
/// an unparsable value.
void set_value(RunConfig& config, std::string_view key, std::string_view value);

/// Applies "key=value".
void apply_override(RunConfig& config, std::string_view assignment);

/// Parses a file of "key = value" lines; '#' starts a comment.
void apply_file(RunConfig& config, const std::filesystem::path& path);
void apply_text(RunConfig& config, std::string_view text, std::string_view origin = "<text>");

/// Every key with its current value, sorted by key; round-trips through apply_text.
std::vector<std::pair<std::string, std::string>> entries(const RunConfig& config);
std::string to_text(const RunConfig& config);

/// Runs every section's validation; ConfigError keys carry the section prefix.
void validate(const RunConfig& config);

/// 64-bit FNV-1a of `text`.
std::uint64_t fnv1a(std::string_view text);

}  // namespace egoseg
