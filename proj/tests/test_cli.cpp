#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "mcsplat/scene_io.hpp"

namespace fs = std::filesystem;
using namespace mcsplat;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mcsplat_cli";

int run(const std::string& args, const std::string& capture = "") {
  std::string cmd = std::string(MCSPLAT_BIN) + " " + args;
  cmd += capture.empty() ? " >/dev/null 2>&1" : " >" + capture + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::string scene_png() {
  static std::string path;
  if (path.empty()) {
    fs::create_directories(kRoot);
    Image img(24, 24);
    for (size_t i = 0; i < img.data.size(); ++i) {
      img.data[i] = static_cast<double>(i * 977 % 65536) / 65535.0;
    }
    path = (kRoot / "scene.png").string();
    write_png(path, img, 16);
  }
  return path;
}

std::string tiny_train_flags(const std::string& out_dir) {
  return "train --scene " + scene_png() + " --mode 2d --out " + out_dir +
         " --iters 30 --init-count 12 --max-gaussians 24 --seed 3 --deterministic"
         " --set log_every=10 --set warmup_iters=10 --set relocation_cadence=10";
}

}  // namespace

TEST_CASE("usage errors exit 1, help exits 0") {
  CHECK(run("--help") == 0);
  CHECK(run("train --help") == 0);
  CHECK(run("") == 1);                           // a subcommand is required
  CHECK(run("train --no-such-flag") == 1);
  CHECK(run("train") == 1);                      // no scene anywhere
  CHECK(run("train --scene x.png --mode 5d") == 1);
  CHECK(run("train --scene x.png --set bogus_key=1") == 1);
  CHECK(run("train --scene x.png --set notkeyvalue") == 1);
  CHECK(run("render --checkpoint only.ply") == 1);  // --scene is required
}

TEST_CASE("zero-iteration training writes the full output tree") {
  const fs::path out = kRoot / "out0";
  fs::remove_all(out);
  const int rc = run("train --scene " + scene_png() +
                     " --mode 2d --out " + out.string() +
                     " --iters 0 --init-count 8 --max-gaussians 16 --seed 1");
  CHECK(rc == 0);
  CHECK(fs::exists(out / "config.resolved"));
  CHECK(fs::exists(out / "metrics.csv"));
  CHECK(fs::exists(out / "checkpoints" / "final.ply"));
  CHECK(fs::exists(out / "checkpoints" / "final.state"));
  CHECK(fs::exists(out / "renders" / "scene.png"));

  const TrainConfig cfg = parse_config_file((out / "config.resolved").string());
  CHECK(cfg.iters == 0);
  CHECK(cfg.init_count == 8);
  CHECK(cfg.scene == scene_png());

  const GaussianSet set = load_checkpoint((out / "checkpoints" / "final.ply").string());
  CHECK(set.count == 8);
  CHECK(set.sh_degree == 0);
  const TrainState ts = load_train_state((out / "checkpoints" / "final.state").string());
  CHECK(ts.iteration == 0);
  CHECK(ts.master_seed == 1);

  // Header-only metrics: nothing was logged.
  CHECK(lines_of(slurp(out / "metrics.csv")).size() == 1);
}

TEST_CASE("deterministic training is byte-stable across runs") {
  const fs::path o1 = kRoot / "det1", o2 = kRoot / "det2";
  fs::remove_all(o1);
  fs::remove_all(o2);
  REQUIRE(run(tiny_train_flags(o1.string())) == 0);
  REQUIRE(run(tiny_train_flags(o2.string())) == 0);
  CHECK(slurp(o1 / "checkpoints" / "final.ply") == slurp(o2 / "checkpoints" / "final.ply"));
  CHECK(slurp(o1 / "checkpoints" / "final.state") == slurp(o2 / "checkpoints" / "final.state"));
  CHECK(slurp(o1 / "metrics.csv") == slurp(o2 / "metrics.csv"));
  CHECK(slurp(o1 / "renders" / "scene.png") == slurp(o2 / "renders" / "scene.png"));

  // log_every=10 over 30 iters: header + rows at 10, 20, 30; wall_ms pinned 0.
  const auto rows = lines_of(slurp(o1 / "metrics.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].substr(0, 5) == "10,0,");
  CHECK(rows[3].substr(0, 5) == "30,0,");
}

TEST_CASE("train summary, render, and eval agree on fidelity") {
  const fs::path out = kRoot / "agree";
  fs::remove_all(out);
  const std::string log = (kRoot / "train_stdout.txt").string();
  REQUIRE(run(tiny_train_flags(out.string()), log) == 0);

  // "... mean PSNR 12.345 dB, mean SSIM 0.98765"
  const std::string text = slurp(log);
  const size_t at = text.find("mean PSNR ");
  REQUIRE(at != std::string::npos);
  const double train_psnr = std::stod(text.substr(at + 10));

  const std::string ckpt = (out / "checkpoints" / "final.ply").string();
  const fs::path rdir = kRoot / "agree_renders";
  fs::remove_all(rdir);
  REQUIRE(run("render --checkpoint " + ckpt + " --scene " + scene_png() +
              " --mode 2d --out " + rdir.string()) == 0);
  CHECK(fs::exists(rdir / "scene.png"));

  const std::string csv = (kRoot / "agree_eval.csv").string();
  REQUIRE(run("eval --checkpoint " + ckpt + " --scene " + scene_png() + " --mode 2d --csv " +
              csv) == 0);
  const auto rows = lines_of(slurp(csv));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "view,psnr,ssim");
  const size_t c1 = rows[1].find(',');
  const double eval_psnr = std::stod(rows[1].substr(c1 + 1));

  // evaluate() on the in-memory doubles vs the float32 checkpoint round trip:
  // identical scene, so they agree to well within a hundredth of a dB.
  CHECK(std::fabs(eval_psnr - train_psnr) <= 0.01);
}

TEST_CASE("resume continues a run from its sidecar") {
  const fs::path out = kRoot / "resume";
  fs::remove_all(out);
  REQUIRE(run(tiny_train_flags(out.string())) == 0);
  const std::string state = (out / "checkpoints" / "final.state").string();

  // Same config, longer horizon: picks up at iteration 30.
  const fs::path out2 = kRoot / "resume2";
  fs::remove_all(out2);
  const int rc = run(tiny_train_flags(out2.string()) + " --set iters=40 --resume " + state);
  CHECK(rc == 0);
  const TrainState ts = load_train_state((out2 / "checkpoints" / "final.state").string());
  CHECK(ts.iteration == 40);
}

TEST_CASE("render tolerates camera-only scenes and empty manifests") {
  // Camera-only dataset: manifest carries w/h, no frame PNGs on disk.
  const fs::path sdir = kRoot / "camonly";
  fs::remove_all(sdir);
  std::vector<View> views(2);
  Mat3 r = Eigen::AngleAxisd(0.3, Vec3::UnitY()).toRotationMatrix();
  views[0].camera = Camera::pinhole(8, 6, 30, 30, 4, 3, Mat3::Identity(), Vec3(0, 0, 2));
  views[1].camera = Camera::pinhole(8, 6, 30, 30, 4, 3, r, Vec3(0.1, 0, 2));
  write_scene(sdir.string(), views);

  const fs::path out0 = kRoot / "out0";
  REQUIRE(fs::exists(out0 / "checkpoints" / "final.ply"));  // from the earlier case
  const std::string ckpt = (out0 / "checkpoints" / "final.ply").string();
  const fs::path rdir = kRoot / "cam_renders";
  REQUIRE(run("render --checkpoint " + ckpt + " --scene " + sdir.string() + " --mode 3d --out " +
              rdir.string()) == 0);
  CHECK(fs::exists(rdir / "r_0.png"));
  CHECK(fs::exists(rdir / "r_1.png"));

  // Empty frames array: a warning and a clean exit.
  const fs::path edir = kRoot / "empty_scene";
  fs::create_directories(edir);
  std::ofstream(edir / "transforms.json") << "{\"camera_angle_x\": 0.7, \"frames\": []}\n";
  const std::string log = (kRoot / "render_empty.txt").string();
  CHECK(run("render --checkpoint " + ckpt + " --scene " + edir.string() + " --mode 3d --out " +
            (kRoot / "never").string(), log) == 0);
  CHECK(slurp(log).find("no cameras") != std::string::npos);
}

TEST_CASE("broken inputs exit 2") {
  const fs::path junk = kRoot / "junk.ply";
  std::ofstream(junk) << "this is not a ply file\n";
  CHECK(run("render --checkpoint " + junk.string() + " --scene " + scene_png() + " --mode 2d") ==
        2);
  CHECK(run("eval --checkpoint " + junk.string() + " --scene " + scene_png() + " --mode 2d") == 2);
  CHECK(run("train --scene " + (kRoot / "missing.png").string() + " --mode 2d --out " +
            (kRoot / "x").string()) == 2);
}

TEST_CASE("verification sweeps pass clean and catch an injected fault") {
  const std::string log = (kRoot / "verify.txt").string();
  const std::string csv = (kRoot / "sweep.csv").string();
  CHECK(run("verify --sweep-csv " + csv, log) == 0);
  const std::string text = slurp(log);
  CHECK(text.find("FAIL") == std::string::npos);
  CHECK(text.find("PASS") != std::string::npos);

  const auto rows = lines_of(slurp(csv));
  REQUIRE(rows.size() >= 2);
  CHECK(rows[0] == "o_old,n,rmse_naive,rmse_center_corrected,rmse_ours");
  CHECK(rows.size() == 29);  // header + 3x3x3 sweep cells + the figure case

  // The hidden fault switch corrupts the covariance-factor series; the
  // brute-force integral sweep must flag it.
  const std::string flog = (kRoot / "verify_fault.txt").string();
  CHECK(run("verify --mutate-relocation-sign", flog) == 3);
  CHECK(slurp(flog).find("FAIL") != std::string::npos);
}
