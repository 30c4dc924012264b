// SPDX-License-Identifier: Apache-2.0
#include "egoseg/prediction_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <string>

namespace egoseg {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from(const json& j, std::size_t expected, const char* name) {
  const auto values = j.get<std::vector<double>>();
  if (values.size() != expected) throw FormatError(fmt::format("prediction field '{}' has the wrong length", name));
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

json prediction_to_json(const FramePrediction& p) {
  json j;
  j["v"] = kPredictionFormatVersion;
  j["t"] = p.timestamp;
  json labels = json::array();
  for (PointClass c : p.labels) labels.push_back(static_cast<int>(c));
  j["labels"] = std::move(labels);
  j["static_ini"] = vector_json(p.weights.static_ini);
  j["moving_ini"] = vector_json(p.weights.moving_ini);
  j["static_new"] = vector_json(p.weights.static_new);
  j["moving_new"] = vector_json(p.weights.moving_new);
  j["radar"] = p.radar_motion ? json{p.radar_motion->vx, p.radar_motion->vy} : json();
  j["ego"] = p.ego ? json{p.ego->speed, p.ego->yaw_rate} : json();
  j["flag"] = p.flag ? json(*p.flag) : json();
  return j;
}

FramePrediction prediction_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("prediction record is not a JSON object");
  if (!j.contains("v") || j.at("v") != kPredictionFormatVersion)
    throw FormatError(fmt::format("unsupported prediction format version {}", j.value("v", json()).dump()));
  FramePrediction p;
  try {
    p.timestamp = j.at("t").get<double>();
    for (const json& c : j.at("labels")) {
      const int v = c.get<int>();
      if (v < 0 || v > 2) throw FormatError(fmt::format("invalid point class {}", v));
      p.labels.push_back(static_cast<PointClass>(v));
    }
    const std::size_t n = p.labels.size();
    p.weights.static_ini = vector_from(j.at("static_ini"), n, "static_ini");
    p.weights.moving_ini = vector_from(j.at("moving_ini"), n, "moving_ini");
    p.weights.static_new = vector_from(j.at("static_new"), n, "static_new");
    p.weights.moving_new = vector_from(j.at("moving_new"), n, "moving_new");
    if (!j.at("radar").is_null()) p.radar_motion = RadarMotion{j.at("radar")[0].get<double>(), j.at("radar")[1].get<double>()};
    if (!j.at("ego").is_null()) p.ego = EgoMotionState{j.at("ego")[0].get<double>(), j.at("ego")[1].get<double>()};
    if (!j.at("flag").is_null()) p.flag = j.at("flag").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("malformed prediction record: {}", e.what()));
  }
  return p;
}

void write_predictions(std::ostream& out, std::span<const FramePrediction> predictions) {
  for (const FramePrediction& p : predictions) out << prediction_to_json(p).dump() << '\n';
}

void write_predictions(const std::filesystem::path& path, std::span<const FramePrediction> predictions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  write_predictions(out, predictions);
  if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
}

std::vector<FramePrediction> read_predictions(std::istream& in) {
  std::vector<FramePrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(fmt::format("line {}: {}", line_no, e.what()));
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

std::vector<FramePrediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open predictions '{}'", path.string()));
  return read_predictions(in);
}

}  // namespace egoseg
