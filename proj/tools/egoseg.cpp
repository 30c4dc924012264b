// SPDX-License-Identifier: Apache-2.0
//
// egoseg: simulate, label, train, infer, evaluate and map radar sequences.
#include "egoseg/commands.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool out_required) {
  cmd->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "random seed (overrides the configuration)");
  auto* out = cmd->add_option("--out", o.out, "output path");
  if (out_required) out->required();
  cmd->add_option("--jobs", o.jobs, "worker threads for per-sequence work")->check(CLI::PositiveNumber);
  cmd->add_option("--set", o.overrides, "configuration override key=value (repeatable)");
}

egoseg::RunConfig resolve(const CommonOptions& o) {
  egoseg::RunConfig config;
  if (!o.config_path.empty()) egoseg::apply_file(config, o.config_path);
  for (const std::string& assignment : o.overrides) egoseg::apply_override(config, assignment);
  if (o.seed) config.seed = *o.seed;
  egoseg::validate(config);
  return config;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("egoseg");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  const char* level = std::getenv("RADAR_EGOSEG_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Radar static/moving segmentation and ego-motion estimation"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string data, split = "all", model, predictions, odometry, sequence;

  auto* simulate = app.add_subcommand("simulate", "write a synthetic dataset and its manifest");
  add_common(simulate, common, true);

  auto* gt_label = app.add_subcommand("gt-label", "label static/moving/false-positive points from odometry");
  add_common(gt_label, common, true);
  gt_label->add_option("--data", data, "dataset directory or .jsonl file")->required();
  gt_label->add_option("--odometry", odometry, "odometry CSV file or directory of <name>.odom.csv");

  auto* train = app.add_subcommand("train", "train the segmentation network");
  add_common(train, common, true);
  train->add_option("--data", data, "dataset directory or .jsonl file")->required();
  train->add_option("--split", split, "manifest split to train on (train, test, all)")->capture_default_str();

  auto* infer = app.add_subcommand("infer", "predict labels and ego-motion per frame");
  add_common(infer, common, true);
  infer->add_option("--model", model, "trained model file")->required()->check(CLI::ExistingFile);
  infer->add_option("--data", data, "dataset directory or .jsonl file")->required();
  infer->add_option("--split", split, "manifest split to predict")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "score predictions against labels");
  add_common(eval, common, false);
  eval->add_option("--data", data, "dataset directory or .jsonl file")->required();
  eval->add_option("--predictions", predictions, "directory written by infer")->required();
  eval->add_option("--split", split, "manifest split to score")->capture_default_str();

  auto* map = app.add_subcommand("map", "accumulate a static map and plot trajectories");
  add_common(map, common, true);
  map->add_option("--data", data, "dataset directory or .jsonl file")->required();
  map->add_option("--sequence", sequence, "sequence name (optional for single-sequence data)");
  map->add_option("--predictions", predictions, "directory written by infer; omit to use labels and odometry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const egoseg::RunConfig config = resolve(common);
    if (simulate->parsed()) {
      egoseg::cmd_simulate(config, common.out, common.jobs);
    } else if (gt_label->parsed()) {
      std::optional<fs::path> odo;
      if (!odometry.empty()) odo = odometry;
      egoseg::cmd_gt_label(config, data, odo, common.out, common.jobs);
    } else if (train->parsed()) {
      egoseg::cmd_train(config, data, split, common.out, [](const egoseg::EpochLog& e) {
        spdlog::info("epoch {:3d}  loss {:.6f}  lr {:.3g}", e.epoch, e.loss, e.learning_rate);
      });
    } else if (infer->parsed()) {
      egoseg::cmd_infer(config, model, data, split, common.out, common.jobs);
    } else if (eval->parsed()) {
      const auto report = egoseg::cmd_eval(config, data, split, predictions, common.out, common.jobs);
      auto summary = report;
      summary.erase("per_sequence");
      std::cout << summary.dump(2) << '\n';
    } else if (map->parsed()) {
      std::optional<fs::path> preds;
      if (!predictions.empty()) preds = predictions;
      egoseg::cmd_map(config, data, sequence, preds, common.out);
    }
  } catch (const egoseg::ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
