// End-to-end tests driving the gebd binary through std::system.
// The test runner passes the binary location in GEBD_BIN.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gebd/data.hpp"
#include "gebd/jsonio.hpp"
#include "gebd/postprocess.hpp"
#include "gebd/trainer.hpp"

namespace fs = std::filesystem;
using namespace gebd;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "gebd_cli_test";

std::string bin() {
  const char* p = std::getenv("GEBD_BIN");
  REQUIRE_MESSAGE(p != nullptr, "GEBD_BIN must point at the gebd binary");
  return p;
}

// Runs a subcommand line, captures stdout+stderr, returns the exit code.
int run(const std::string& args, std::string* output = nullptr) {
  const fs::path cap = kRoot / "capture.txt";
  fs::create_directories(kRoot);
  const std::string cmd =
      bin() + " " + args + " > " + cap.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  if (output) {
    std::ifstream in(cap);
    std::ostringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: " << p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path d = kRoot / leaf;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Small corpus + small model so a train run stays well under a second.
const char* kSynthCfg = R"({"l_min": 12, "l_max": 18, "dim": 6, "min_gap": 3})";
const char* kTrainCfg = R"({
  "model": {"d_enc": 4, "enc_tf_layers": 1, "enc_tf_heads": 2,
            "simsiam_hidden": 4,
            "decoder": {"c_decoder": 4, "stage_widths": [4, 4, 4, 4]},
            "tsm_head_hidden": 4, "head_tf_layers": 1, "head_tf_heads": 2},
  "train": {"epochs": 2, "learning_rate": 0.003, "patience": 10}
})";

fs::path make_dataset(const std::string& leaf, uint64_t seed) {
  const fs::path dir = fresh_dir(leaf);
  const fs::path cfg = kRoot / (leaf + "_synth.json");
  spit(cfg, kSynthCfg);
  const int rc = run("synth --out " + dir.string() + " --num-videos 8 --seed " +
                     std::to_string(seed) + " --config " + cfg.string());
  REQUIRE(rc == 0);
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("synth") == 2);                        // missing required options
  CHECK(run("synth --out x --num-videos 0") == 2); // rejected by range check
  CHECK(run("--help") == 0);

  std::string out;
  CHECK(run("train --data x --out y --fold 7 --k 4", &out) == 2);
  CHECK(out.find("--fold") != std::string::npos);
}

TEST_CASE("synth writes a loadable dataset plus manifest") {
  const fs::path dir = make_dataset("synth_a", 5);

  CHECK(fs::exists(dir / "annotations.json"));
  int gebf = 0;
  for (const auto& e : fs::directory_iterator(dir / "features"))
    if (e.path().extension() == ".gebf") ++gebf;
  CHECK(gebf == 8);

  const ordered_json m = parse_json_file((dir / "manifest.json").string());
  CHECK(m.at("command") == "synth");
  CHECK(m.at("seed") == 5);
  CHECK(m.at("artifacts").size() == 9);  // annotations + 8 feature files
  CHECK(m.at("config").at("synth").at("dim") == 6);

  const Dataset data = load_dataset(dir.string());
  CHECK(data.features.size() == 8);
  for (const FeatureSequence& f : data.features) {
    CHECK(f.D == 6);
    CHECK(f.L >= 12);
    CHECK(f.L <= 18);
  }
}

TEST_CASE("synth is reproducible byte for byte") {
  const fs::path a = make_dataset("synth_b1", 21);
  const fs::path b = make_dataset("synth_b2", 21);
  const fs::path c = make_dataset("synth_b3", 22);

  CHECK(slurp(a / "annotations.json") == slurp(b / "annotations.json"));
  bool any_file_diff = false;
  for (const auto& e : fs::directory_iterator(a / "features")) {
    const std::string name = e.path().filename().string();
    CHECK(slurp(e.path()) == slurp(b / "features" / name));
    if (slurp(e.path()) != slurp(c / "features" / name)) any_file_diff = true;
  }
  CHECK(any_file_diff);  // a different seed must change the data
}

TEST_CASE("train / predict / eval round trip") {
  const fs::path data = make_dataset("pipe_data", 9);
  const fs::path cfg = kRoot / "pipe_train.json";
  spit(cfg, kTrainCfg);

  const fs::path run0 = fresh_dir("pipe_run0");
  std::string out;
  int rc = run("train --data " + data.string() + " --out " + run0.string() +
                   " --fold 0 --k 4 --seed 11 --config " + cfg.string(),
               &out);
  CHECK(rc == 0);
  CHECK(out.find("best epoch") != std::string::npos);
  CHECK(fs::exists(run0 / "fold_0.gebc"));
  CHECK(fs::exists(run0 / "manifest_fold_0.json"));

  // One metrics line per epoch, each valid JSON with the epoch number.
  {
    std::ifstream mf(run0 / "metrics.jsonl");
    std::string line;
    int epoch = 0;
    while (std::getline(mf, line)) {
      const ordered_json j = parse_json_text(line, "metrics.jsonl");
      CHECK(j.at("epoch") == epoch++);
    }
    CHECK(epoch == 2);
  }

  const fs::path preds = kRoot / "pipe_preds.json";
  rc = run("predict --data " + data.string() + " --ckpt " +
           (run0 / "fold_0.gebc").string() + " --out " + preds.string() +
           " --threshold 0.2");
  CHECK(rc == 0);
  CHECK(fs::exists(preds));
  CHECK(fs::exists(kRoot / "pipe_preds.json.manifest.json"));

  const std::vector<BoundaryPrediction> bp = read_predictions(preds.string());
  CHECK(bp.size() == 8 * 3);  // --class all: one entry per video per class

  const fs::path report = kRoot / "pipe_report.json";
  rc = run("eval --pred " + preds.string() + " --ann " +
               (data / "annotations.json").string() +
               " --rel 0.05,0.1 --class whole --out " + report.string(),
           &out);
  CHECK(rc == 0);
  CHECK(out.find("whole") != std::string::npos);
  CHECK(out.find("0.05") != std::string::npos);

  const ordered_json rep = parse_json_file(report.string());
  CHECK(rep.at("class") == "whole");
  CHECK(rep.at("num_videos") == 8);
  CHECK(rep.at("mean").size() == 2);
  CHECK(fs::exists(kRoot / "pipe_report.json.manifest.json"));

  // Ensembling a fold with itself must not change anything but still exercises
  // the multi-checkpoint path.
  const fs::path preds2 = kRoot / "pipe_preds2.json";
  rc = run("predict --data " + data.string() + " --ckpt " +
           (run0 / "fold_0.gebc").string() + " " +
           (run0 / "fold_0.gebc").string() + " --out " + preds2.string() +
           " --threshold 0.2");
  CHECK(rc == 0);
  CHECK(slurp(preds2) == slurp(preds));
}

TEST_CASE("seeded pipeline reruns are byte identical") {
  const fs::path data = make_dataset("det_data", 13);
  const fs::path cfg = kRoot / "det_train.json";
  spit(cfg, kTrainCfg);

  auto one = [&](const std::string& leaf) {
    const fs::path dir = fresh_dir(leaf);
    REQUIRE(run("train --data " + data.string() + " --out " + dir.string() +
                " --fold 1 --k 4 --seed 77 --config " + cfg.string()) == 0);
    const fs::path p = dir / "preds.json";
    REQUIRE(run("predict --data " + data.string() + " --ckpt " +
                (dir / "fold_1.gebc").string() + " --out " + p.string()) == 0);
    return dir;
  };
  const fs::path a = one("det_a");
  const fs::path b = one("det_b");
  CHECK(slurp(a / "fold_1.gebc") == slurp(b / "fold_1.gebc"));
  CHECK(slurp(a / "preds.json") == slurp(b / "preds.json"));
}

TEST_CASE("data and format problems exit with code 3") {
  CHECK(run("train --data " + (kRoot / "no_such_dir").string() +
            " --out " + (kRoot / "x").string() + " --fold 0 --k 4") == 3);
  CHECK(run("predict --data " + (kRoot / "no_such_dir").string() +
            " --ckpt missing.gebc --out " + (kRoot / "p.json").string()) == 3);
  CHECK(run("eval --pred " + (kRoot / "nope.json").string() + " --ann " +
            (kRoot / "nope2.json").string()) == 3);

  // Truncating one feature file must surface as a format error.
  const fs::path data = make_dataset("trunc_data", 31);
  fs::path victim;
  for (const auto& e : fs::directory_iterator(data / "features")) victim = e.path();
  const std::string bytes = slurp(victim);
  spit(victim, bytes.substr(0, bytes.size() / 2));
  std::string out;
  CHECK(run("train --data " + data.string() + " --out " +
                (kRoot / "trunc_run").string() + " --fold 0 --k 4",
            &out) == 3);
  CHECK(out.find("truncated") != std::string::npos);
}

TEST_CASE("config conflicts exit with 2 and divergence with 4") {
  const fs::path data = make_dataset("cfg_data", 41);
  const fs::path bad = kRoot / "bad_dim.json";
  spit(bad, R"({"model": {"feature_dim": 7}})");
  std::string out;
  CHECK(run("train --data " + data.string() + " --out " +
                (kRoot / "cfg_run").string() + " --fold 0 --k 4 --config " +
                bad.string(),
            &out) == 2);
  CHECK(out.find("feature_dim") != std::string::npos);

  const fs::path cfg = kRoot / "diverge_train.json";
  spit(cfg, kTrainCfg);
  CHECK(run("train --data " + data.string() + " --out " +
            (kRoot / "diverge_run").string() +
            " --fold 0 --k 4 --config " + cfg.string() +
            " --lr 1e120 --epochs 3") == 4);
}
