// SPDX-License-Identifier: Apache-2.0
#include "egoseg/sequence_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <string>

namespace egoseg {

using nlohmann::json;

namespace {

json instances_to_json(const std::vector<std::optional<std::int64_t>>& ids) {
  json arr = json::array();
  for (const auto& id : ids) arr.push_back(id ? json(*id) : json(nullptr));
  return arr;
}

std::vector<std::optional<std::int64_t>> instances_from_json(const json& arr) {
  std::vector<std::optional<std::int64_t>> ids;
  ids.reserve(arr.size());
  for (const json& v : arr) {
    if (v.is_null())
      ids.emplace_back();
    else
      ids.emplace_back(v.get<std::int64_t>());
  }
  return ids;
}

}  // namespace

json frame_to_json(const RadarFrame& frame) {
  json j;
  j["v"] = kSequenceFormatVersion;
  j["t"] = frame.timestamp;
  j["sensor"] = frame.sensor_id;
  json pts = json::array();
  for (const RadarPoint& p : frame.points) {
    json row = {p.range, p.azimuth, p.radial_velocity};
    if (p.rcs) row.push_back(*p.rcs);
    pts.push_back(std::move(row));
  }
  j["pts"] = std::move(pts);
  if (frame.gt) {
    json cls = json::array();
    for (PointClass c : frame.gt->classes) cls.push_back(static_cast<int>(c));
    j["gt"] = {{"class", std::move(cls)}, {"inst", instances_to_json(frame.gt->instances)}};
  } else if (frame.annotations) {
    j["gt"] = {{"inst", instances_to_json(*frame.annotations)}};
  }
  if (frame.odom) j["odom"] = {frame.odom->speed, frame.odom->yaw_rate};
  return j;
}

RadarFrame frame_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("frame record is not a JSON object");
  if (j.contains("v") && j.at("v").get<int>() != kSequenceFormatVersion)
    throw FormatError(fmt::format("unsupported sequence format version {}", j.at("v").dump()));

  RadarFrame frame;
  try {
    frame.timestamp = j.at("t").get<double>();
    frame.sensor_id = j.value("sensor", 0);
    for (const json& row : j.at("pts")) {
      if (row.size() < 3 || row.size() > 4)
        throw FormatError("point record must hold 3 or 4 numbers");
      RadarPoint p;
      p.range = row[0].get<double>();
      p.azimuth = normalize_angle(row[1].get<double>());
      p.radial_velocity = row[2].get<double>();
      if (row.size() == 4) p.rcs = row[3].get<double>();
      frame.points.push_back(p);
    }
    if (j.contains("gt")) {
      const json& gt = j.at("gt");
      const auto ids = gt.contains("inst") ? instances_from_json(gt.at("inst"))
                                           : std::vector<std::optional<std::int64_t>>(frame.points.size());
      if (gt.contains("class")) {
        GroundTruthLabels labels;
        for (const json& c : gt.at("class")) {
          const int v = c.get<int>();
          if (v < 0 || v > 2) throw FormatError(fmt::format("unknown point class {}", v));
          labels.classes.push_back(static_cast<PointClass>(v));
        }
        labels.instances = ids;
        frame.gt = std::move(labels);
      } else {
        frame.annotations = ids;
      }
    }
    if (j.contains("odom")) {
      const json& o = j.at("odom");
      if (o.size() != 2) throw FormatError("odom must be [speed, yaw_rate]");
      frame.odom = EgoMotionState{o[0].get<double>(), o[1].get<double>()};
    }
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("malformed frame record: {}", e.what()));
  }
  return frame;
}

void write_sequence(std::ostream& out, std::span<const RadarFrame> frames) {
  for (const RadarFrame& f : frames) out << frame_to_json(f).dump() << '\n';
}

void write_sequence(const std::filesystem::path& path, std::span<const RadarFrame> frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
  write_sequence(out, frames);
  if (!out) throw std::runtime_error(fmt::format("write failed: {}", path.string()));
}

Sequence read_sequence(std::istream& in) {
  Sequence seq;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(fmt::format("line {}: {}", line_no, e.what()));
    }
    seq.push_back(frame_from_json(j));
  }
  return seq;
}

Sequence read_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  return read_sequence(in);
}

}  // namespace egoseg
