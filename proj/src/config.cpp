// SPDX-License-Identifier: Apache-2.0
#include "egoseg/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace egoseg {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError(std::string(key), fmt::format("cannot parse '{}'", text));
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string format_double(double v) { return fmt::format("{}", v); }

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Get>
Field real(Get access) {
  return {[access](RunConfig& c, std::string_view key, std::string_view v) { access(c) = parse_number<double>(key, v); },
          [access](const RunConfig& c) { return format_double(access(c)); }};
}

template <typename Get>
Field integer(Get access) {
  using T = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
  return {[access](RunConfig& c, std::string_view key, std::string_view v) { access(c) = parse_number<T>(key, v); },
          [access](const RunConfig& c) { return fmt::format("{}", access(c)); }};
}

template <typename Get>
Field widths(Get access) {
  return {[access](RunConfig& c, std::string_view key, std::string_view v) {
            const auto parts = split(v, ',');
            if (parts.size() != 3) throw ConfigError(std::string(key), "expected three comma-separated widths");
            for (std::size_t i = 0; i < 3; ++i) access(c)[i] = parse_number<int>(key, parts[i]);
          },
          [access](const RunConfig& c) {
            const auto& w = access(c);
            return fmt::format("{},{},{}", w[0], w[1], w[2]);
          }};
}

Field ego_profile() {
  return {[](RunConfig& c, std::string_view key, std::string_view v) {
            c.scene.ego_profile.clear();
            if (trim(v).empty()) return;
            for (std::string_view seg : split(v, ',')) {
              const auto parts = split(seg, ':');
              if (parts.size() != 3) throw ConfigError(std::string(key), "segments are duration:speed:yaw_rate");
              c.scene.ego_profile.push_back({parse_number<double>(key, parts[0]), parse_number<double>(key, parts[1]),
                                             parse_number<double>(key, parts[2])});
            }
          },
          [](const RunConfig& c) {
            std::string out;
            for (const EgoSegment& s : c.scene.ego_profile) {
              if (!out.empty()) out += ",";
              out += fmt::format("{}:{}:{}", s.duration, s.speed, s.yaw_rate);
            }
            return out;
          }};
}

// Accessors are generic so one lambda serves both the setter and the getter.
#define EGOSEG_REAL(key, member) {key, real([](auto& c) -> auto& { return c.member; })}
#define EGOSEG_INT(key, member) {key, integer([](auto& c) -> auto& { return c.member; })}
#define EGOSEG_WIDTHS(key, member) {key, widths([](auto& c) -> auto& { return c.member; })}

const std::map<std::string, Field, std::less<>>& registry() {
  static const std::map<std::string, Field, std::less<>> fields = {
      EGOSEG_REAL("scene.duration", scene.duration),
      EGOSEG_REAL("scene.frame_rate", scene.frame_rate),
      EGOSEG_REAL("scene.landmark_density", scene.landmark_density),
      EGOSEG_REAL("scene.edge_offset_min", scene.edge_offset_min),
      EGOSEG_REAL("scene.edge_offset_max", scene.edge_offset_max),
      EGOSEG_REAL("scene.detection_probability", scene.detection_probability),
      EGOSEG_INT("scene.moving_count", scene.moving_count),
      EGOSEG_REAL("scene.moving_speed_min", scene.moving_speed_min),
      EGOSEG_REAL("scene.moving_speed_max", scene.moving_speed_max),
      EGOSEG_REAL("scene.moving_points_mean", scene.moving_points_mean),
      EGOSEG_REAL("scene.object_length_min", scene.object_length_min),
      EGOSEG_REAL("scene.object_length_max", scene.object_length_max),
      EGOSEG_REAL("scene.object_width_min", scene.object_width_min),
      EGOSEG_REAL("scene.object_width_max", scene.object_width_max),
      EGOSEG_REAL("scene.false_positive_rate", scene.false_positive_rate),
      EGOSEG_REAL("scene.doppler_span", scene.doppler_span),
      EGOSEG_REAL("scene.sigma_vr", scene.sigma_vr),
      EGOSEG_REAL("scene.sigma_range", scene.sigma_range),
      EGOSEG_REAL("scene.sigma_azimuth", scene.sigma_azimuth),
      EGOSEG_REAL("scene.static_rcs_mean", scene.static_rcs_mean),
      EGOSEG_REAL("scene.static_rcs_std", scene.static_rcs_std),
      EGOSEG_REAL("scene.moving_rcs_mean", scene.moving_rcs_mean),
      EGOSEG_REAL("scene.moving_rcs_std", scene.moving_rcs_std),
      EGOSEG_REAL("scene.false_positive_rcs_mean", scene.false_positive_rcs_mean),
      EGOSEG_REAL("scene.false_positive_rcs_std", scene.false_positive_rcs_std),
      EGOSEG_REAL("scene.min_range", scene.min_range),
      EGOSEG_REAL("scene.max_range", scene.max_range),
      EGOSEG_REAL("scene.fov_half_angle", scene.fov_half_angle),
      EGOSEG_REAL("scene.extrinsics_x", scene.extrinsics.x),
      EGOSEG_REAL("scene.extrinsics_y", scene.extrinsics.y),
      EGOSEG_REAL("scene.extrinsics_theta", scene.extrinsics.theta),
      EGOSEG_INT("scene.sensor_id", scene.sensor_id),
      {"scene.ego_profile", ego_profile()},
      EGOSEG_REAL("scene.ego_speed_min", scene.ego_speed_min),
      EGOSEG_REAL("scene.ego_speed_max", scene.ego_speed_max),
      EGOSEG_REAL("scene.ego_yaw_rate_max", scene.ego_yaw_rate_max),
      EGOSEG_REAL("scene.ego_segment_min", scene.ego_segment_min),
      EGOSEG_REAL("scene.ego_segment_max", scene.ego_segment_max),
      EGOSEG_REAL("scene.gt_residual_threshold", scene.gt_residual_threshold),
      EGOSEG_INT("scene.lifespan_min_frames", scene.lifespan_min_frames),
      EGOSEG_INT("dataset.sequences", dataset.sequences),
      EGOSEG_INT("dataset.holdout", dataset.holdout),
      EGOSEG_INT("model.feature_count", model.feature_count),
      EGOSEG_WIDTHS("model.encoder_widths", model.encoder_widths),
      EGOSEG_INT("model.gru_hidden", model.gru_hidden),
      EGOSEG_WIDTHS("model.decoder_widths", model.decoder_widths),
      EGOSEG_WIDTHS("model.head_widths", model.head_widths),
      EGOSEG_REAL("model.dropout", model.dropout),
      EGOSEG_REAL("model.bn_momentum", model.bn_momentum),
      EGOSEG_REAL("model.bn_epsilon", model.bn_epsilon),
      EGOSEG_INT("train.batch_size", train.batch_size),
      EGOSEG_INT("train.max_epochs", train.max_epochs),
      EGOSEG_INT("train.early_stop_patience", train.early_stop_patience),
      EGOSEG_REAL("train.learning_rate", train.learning_rate),
      EGOSEG_REAL("train.lr_decay", train.lr_decay),
      EGOSEG_INT("train.lr_patience", train.lr_patience),
      EGOSEG_REAL("train.improvement_threshold", train.improvement_threshold),
      EGOSEG_REAL("train.adam_beta1", train.adam_beta1),
      EGOSEG_REAL("train.adam_beta2", train.adam_beta2),
      EGOSEG_REAL("train.adam_epsilon", train.adam_epsilon),
      EGOSEG_INT("train.low_static_count", train.low_static_count),
      EGOSEG_REAL("train.low_static_weight", train.low_static_weight),
      EGOSEG_REAL("solver.sigma", solver.sigma),
      EGOSEG_REAL("solver.c_static", solver.c_static),
      EGOSEG_REAL("solver.label_threshold", solver.label_threshold),
      EGOSEG_REAL("solver.condition_limit", solver.condition_limit),
      EGOSEG_INT("solver.iterations", solver.iterations),
      EGOSEG_REAL("cluster.eps", cluster.eps),
      EGOSEG_INT("cluster.min_pts", cluster.min_pts),
      EGOSEG_REAL("cluster.gate", cluster.gate),
      EGOSEG_REAL("metrics.speed_c_err", s_rmse.speed_c_err),
      EGOSEG_REAL("metrics.speed_s", s_rmse.speed_s),
      EGOSEG_REAL("metrics.yaw_rate_c_err", s_rmse.yaw_rate_c_err),
      EGOSEG_REAL("metrics.yaw_rate_s", s_rmse.yaw_rate_s),
      EGOSEG_REAL("metrics.rte_segment_length", rte.segment_length),
      EGOSEG_INT("metrics.first_frame", eval_first_frame),
      EGOSEG_INT("window_length", window_length),
      EGOSEG_INT("seed", seed),
  };
  return fields;
}

#undef EGOSEG_REAL
#undef EGOSEG_INT
#undef EGOSEG_WIDTHS

void require(bool ok, const char* key, const char* message) {
  if (!ok) throw ConfigError(key, message);
}

template <typename F>
void with_prefix(const char* prefix, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    throw ConfigError(std::string(prefix) + "." + e.key(), what.substr(e.key().size() + 2));
  }
}

}  // namespace

void set_value(RunConfig& config, std::string_view key, std::string_view value) {
  const auto it = registry().find(key);
  if (it == registry().end()) throw ConfigError(std::string(key), "unknown configuration key");
  it->second.set(config, key, trim(value));
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError(std::string(trim(assignment)), "expected key=value");
  set_value(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void apply_text(RunConfig& config, std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(std::string(line), fmt::format("{}:{}: expected key = value", origin, line_no));
    set_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open configuration '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  apply_text(config, text.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, field] : registry()) out.emplace_back(key, field.get(config));
  return out;
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [key, value] : entries(config)) out += key + " = " + value + "\n";
  return out;
}

void validate(const RunConfig& c) {
  with_prefix("scene", [&] { validate(c.scene); });
  with_prefix("model", [&] { validate(c.model); });
  with_prefix("train", [&] { validate(c.train); });
  require(c.dataset.sequences >= 1, "dataset.sequences", "must be positive");
  require(c.dataset.holdout >= 0 && c.dataset.holdout <= c.dataset.sequences, "dataset.holdout",
          "must lie in [0, dataset.sequences]");
  require(c.solver.sigma > 0.0, "solver.sigma", "must be positive");
  require(c.solver.c_static >= 0.0, "solver.c_static", "must be nonnegative");
  require(c.solver.label_threshold >= 0.0, "solver.label_threshold", "must be nonnegative");
  require(c.solver.condition_limit > 1.0, "solver.condition_limit", "must exceed 1");
  require(c.solver.iterations >= 1, "solver.iterations", "must be positive");
  require(c.cluster.eps > 0.0, "cluster.eps", "must be positive");
  require(c.cluster.min_pts >= 1, "cluster.min_pts", "must be at least 1");
  require(c.cluster.gate > 0.0, "cluster.gate", "must be positive");
  require(c.s_rmse.speed_c_err > 0.0, "metrics.speed_c_err", "must be positive");
  require(c.s_rmse.speed_s > 0.0, "metrics.speed_s", "must be positive");
  require(c.s_rmse.yaw_rate_c_err > 0.0, "metrics.yaw_rate_c_err", "must be positive");
  require(c.s_rmse.yaw_rate_s > 0.0, "metrics.yaw_rate_s", "must be positive");
  require(c.rte.segment_length > 0.0, "metrics.rte_segment_length", "must be positive");
  require(c.window_length >= 1, "window_length", "must be positive");
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace egoseg
