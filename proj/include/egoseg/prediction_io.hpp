// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "egoseg/errors.hpp"
#include "egoseg/inference.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>

namespace egoseg {

inline constexpr int kPredictionFormatVersion = 1;

/// {"v":1,"t":..,"labels":[0|1|2,..],"static_ini":[..],"moving_ini":[..],
///  "static_new":[..],"moving_new":[..],"radar":[vx,vy]|null,
///  "ego":[speed,yaw_rate]|null,"flag":null|"underdetermined"|"ill_conditioned"}
nlohmann::json prediction_to_json(const FramePrediction& prediction);
FramePrediction prediction_from_json(const nlohmann::json& j);

void write_predictions(std::ostream& out, std::span<const FramePrediction> predictions);
void write_predictions(const std::filesystem::path& path, std::span<const FramePrediction> predictions);
std::vector<FramePrediction> read_predictions(std::istream& in);
std::vector<FramePrediction> read_predictions(const std::filesystem::path& path);

}  // namespace egoseg
