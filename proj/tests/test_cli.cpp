// SPDX-License-Identifier: Apache-2.0
// Drives the egoseg executable end to end: the documented command sequence
// and the exit status of error paths.
#include <doctest.h>

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "egoseg_cli_test";

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run egoseg(const std::string& args) {
  const std::string cmd = std::string("RADAR_EGOSEG_LOG=warn \"") + EGOSEG_CLI + "\" " + args + " > \"" +
                          (kWork / "stdout").string() + "\" 2> \"" + (kWork / "stderr").string() + "\"";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(kWork / "stdout");
  r.err = slurp(kWork / "stderr");
  return r;
}

// Tiny network and corpus so the whole pipeline runs in seconds.
const std::string kToy =
    "--set dataset.sequences=3 --set dataset.holdout=1 --set scene.duration=5 --set window_length=3 "
    "--set model.encoder_widths=8,8,8 --set model.gru_hidden=8 --set model.decoder_widths=8,8,8 "
    "--set model.head_widths=8,8,1 --set train.max_epochs=3";

}  // namespace

TEST_CASE("simulate, train, infer, eval and map run as one scripted sequence") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::string w = kWork.string();

  REQUIRE(egoseg("simulate --seed 7 --out " + w + "/data " + kToy).status == 0);
  REQUIRE(egoseg("train --data " + w + "/data --split train --out " + w + "/model.egsm " + kToy).status == 0);
  CHECK(fs::exists(kWork / "model.egsm.log.csv"));
  CHECK(slurp(kWork / "model.egsm.log.csv").rfind("epoch,loss,lr\n", 0) == 0);
  REQUIRE(egoseg("infer --model " + w + "/model.egsm --data " + w + "/data --split test --out " + w + "/pred " +
                 kToy)
              .status == 0);
  CHECK(fs::exists(kWork / "pred" / "seq_0002.pred.jsonl"));

  const Run eval =
      egoseg("eval --data " + w + "/data --split test --predictions " + w + "/pred --out " + w + "/metrics.json " + kToy);
  REQUIRE(eval.status == 0);
  const auto summary = nlohmann::json::parse(eval.out);
  const auto saved = nlohmann::json::parse(slurp(kWork / "metrics.json"));
  for (const char* key : {"fdr", "mdr", "f1", "iou", "s_rmse_vx_cm_s", "s_rmse_omega_deg_s", "rte_50_m", "counts"})
    CHECK(saved.contains(key));
  CHECK(summary["counts"] == saved["counts"]);

  REQUIRE(egoseg("map --data " + w + "/data --sequence seq_0002 --predictions " + w + "/pred --out " + w + "/map " +
                 kToy)
              .status == 0);
  CHECK(slurp(kWork / "map" / "map.svg").find("<svg") != std::string::npos);

  // Same inputs and seed: identical model bytes.
  REQUIRE(egoseg("train --data " + w + "/data --split train --out " + w + "/again.egsm " + kToy).status == 0);
  CHECK(slurp(kWork / "model.egsm") == slurp(kWork / "again.egsm"));
}

TEST_CASE("error paths exit nonzero") {
  fs::create_directories(kWork);
  const std::string w = kWork.string();

  const Run bad_config = egoseg("simulate --out " + w + "/bad --set scene.duration=-1");
  CHECK(bad_config.status == 2);
  CHECK(bad_config.err.find("scene.duration") != std::string::npos);

  CHECK(egoseg("simulate --out " + w + "/bad --set scene.nope=1").status == 2);
  CHECK(egoseg("train --data " + w + "/missing --out " + w + "/m.egsm").status != 0);
  CHECK(egoseg("frobnicate").status != 0);

  // A model file from a future format version.
  if (fs::exists(kWork / "model.egsm")) {
    std::string bytes = slurp(kWork / "model.egsm");
    bytes[4] = 9;
    std::ofstream(kWork / "future.egsm", std::ios::binary) << bytes;
    const Run r = egoseg("infer --model " + w + "/future.egsm --data " + w + "/data --out " + w + "/p2 " + kToy);
    CHECK(r.status == 1);
    CHECK(r.err.find("version") != std::string::npos);
  }
}
