// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "egoseg/errors.hpp"
#include "egoseg/point_model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>

namespace egoseg {

/// Version written into every JSON-Lines record under "v". Records without
/// "v" are read as this version; any other value is rejected.
inline constexpr int kSequenceFormatVersion = 1;

/// {"v":1,"t":..,"sensor":..,"pts":[[range,azimuth,vr(,rcs)],..],
///  "gt":{"class":[0|1|2,..],"inst":[id|null,..]},"odom":[speed,yaw_rate]}
nlohmann::json frame_to_json(const RadarFrame& frame);

/// Inverse of frame_to_json. Azimuths are wrapped into [-pi, pi). A "gt"
/// object carrying only "inst" is read as external annotations.
RadarFrame frame_from_json(const nlohmann::json& j);

void write_sequence(std::ostream& out, std::span<const RadarFrame> frames);
void write_sequence(const std::filesystem::path& path, std::span<const RadarFrame> frames);
Sequence read_sequence(std::istream& in);
Sequence read_sequence(const std::filesystem::path& path);

}  // namespace egoseg
