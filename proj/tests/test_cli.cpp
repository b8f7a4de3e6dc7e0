#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lrp3d/cli.hpp"
#include "lrp3d/volume_io.hpp"
#include "support.hpp"

using namespace lrp3d;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lrp3d");
  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST_CASE("pipeline from data generation to sweep") {
  test::TempDir dir("cli");
  const std::string data = dir / "data", weights = dir / "w.nnw";
  REQUIRE(cli({"gen-data", "--seed", "7", "--cases", "2", "--shape", "6,8,16,16", "--out", data}).code == kExitOk);
  CHECK(fs::exists(fs::path(data) / "cases.txt"));

  const Run tr = cli({"train", "--data", data, "--out", weights, "--epochs", "2", "--seed", "1"});
  REQUIRE(tr.code == kExitOk);
  CHECK(tr.out.find("epoch 2 loss ") != std::string::npos);
  CHECK(fs::exists(weights));
  CHECK(first_line(slurp(dir / "w.csv")) == "epoch,loss,mean_dice");

  SUBCASE("predict") {
    const Run r = cli({"predict", "--data", data, "--weights", weights, "--out", dir / "pred"});
    CHECK(r.code == kExitOk);
    CHECK(first_line(slurp(fs::path(dir / "pred") / "predict.csv")) == "case,dice,predicted_voxels,lesion_voxels");
    CHECK(std::get<Mask>(read_volume(fs::path(dir / "pred") / "case_001_pred.vol")).shape == Shape{8, 16, 16});
  }
  SUBCASE("explain with the two paper filters") {
    for (const char* f : {"pass:0.0:0.4", "clamp:0.2"}) {
      const fs::path out = fs::path(dir / "explain") / f;
      const Run r = cli({"explain", "--data", data, "--weights", weights, "--out", out.string(), "--filter", f,
                         "--case", "case_000", "--seed-mode", "full_output"});
      REQUIRE(r.code == kExitOk);
      Index vols = 0, images = 0;
      for (const auto& e : fs::directory_iterator(out)) {
        vols += e.path().extension() == ".vol";
        images += e.path().extension() == ".ppm" || e.path().extension() == ".pgm";
      }
      CHECK(vols == 6);
      CHECK(images == 18);
      const TensorF r0 = read_tensor((out / "case_000_c2_rCBF_R0.vol").string());
      CHECK(r0.shape() == Shape{8, 16, 16});
      CHECK(first_line(slurp(out / "explain.csv")) ==
            "case,dice,seed_warning,relevance_out,relevance_in,absorbed_units,absorbed_mass");
    }
    const TensorF clamped = read_tensor((fs::path(dir / "explain") / "clamp:0.2" / "case_000_c0_ADC_R0.vol").string());
    CHECK(clamped.max_abs() > 0.0f);
  }
  SUBCASE("metrics and sweep") {
    const Run m = cli({"metrics", "--data", data, "--weights", weights, "--out", dir / "incl.csv", "--filter",
                       "clamp:0.2", "--seed-mode", "full_output"});
    CHECK(m.code == kExitOk);
    CHECK(m.out.rfind("raw: mean D(LRP,x) ", 0) == 0);
    CHECK(m.out.find("\nclamp:0.2: mean D(LRP,x) ") != std::string::npos);
    CHECK(first_line(slurp(dir / "incl.csv")) == "case,channel,filter,theta_x,theta_lrp,incl_x,incl_gt,valid");

    const Run s = cli({"sweep", "--data", data, "--weights", weights, "--out", dir / "sweep.csv", "--alphas",
                       "0.2,1.0", "--alpha-lo", "0.05", "--seed-mode", "full_output"});
    CHECK(s.code == kExitOk);
    CHECK(s.out.rfind("24 rows, 24 valid", 0) == 0);
    const std::string csv = slurp(dir / "sweep.csv");
    CHECK(first_line(csv) == "case,channel,alpha_lo,alpha_hi,filter_kind,mu,area,omega_tilde,incl_x,incl_gt,dice,valid");
    CHECK(csv.find("\ncase_000,0,0.05,0.2,pass,") != std::string::npos);
  }
  SUBCASE("reruns are byte-identical") {
    REQUIRE(cli({"gen-data", "--seed", "7", "--cases", "2", "--shape", "6,8,16,16", "--out", dir / "data2"}).code == 0);
    for (const char* f : {"case_000_x.vol", "case_001_mask.vol", "cases.txt"})
      CHECK(slurp(fs::path(data) / f) == slurp(fs::path(dir / "data2") / f));
    REQUIRE(cli({"train", "--data", data, "--out", dir / "w2.nnw", "--epochs", "2", "--seed", "1"}).code == 0);
    CHECK(slurp(weights) == slurp(dir / "w2.nnw"));
    CHECK(slurp(dir / "w.csv") == slurp(dir / "w2.csv"));
  }
  SUBCASE("config file supplies paths and options") {
    const std::string cfg = dir / "run.json";
    std::ofstream(cfg) << R"({"paths": {"data": ")" << data << R"(", "weights": ")" << weights << R"(", "out": ")"
                       << (dir / "cfg_sweep.csv") << R"("}, "lrp": {"seed": "full_output"},
                          "metrics": {"alphas": [0.5]}})";
    const Run r = cli({"sweep", "--config", cfg});
    CHECK(r.code == kExitOk);
    CHECK(r.out.rfind("12 rows", 0) == 0);
  }
}

TEST_CASE("calculus subcommand") {
  const Run r = cli({"calculus", "--alphas", "0.1,0.5,1.0", "--true", "pass:0.1:0.5", "--points", "1001"});
  REQUIRE(r.code == kExitOk);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "alpha,area,error");
  std::getline(lines, line);
  CHECK(line.rfind("0.1,", 0) == 0);
  CHECK(line.substr(line.rfind(',') + 1) != "0");
  std::getline(lines, line);
  CHECK(line.rfind("0.5,", 0) == 0);
  CHECK(line.substr(line.rfind(',') + 1) == "0");

  test::TempDir dir("calc");
  const Run f = cli({"calculus", "--alphas", "0.1,0.5,1.0", "--true", "pass:0.1:0.5", "--out", dir / "c.csv"});
  CHECK(f.code == kExitOk);
  CHECK(f.out.rfind("alpha0 0.5", 0) == 0);
  CHECK(first_line(slurp(dir / "c.csv")) == "alpha,area,error");
}

TEST_CASE("exit codes") {
  SUBCASE("usage errors exit 1 with usage text") {
    for (const auto& args : std::vector<std::vector<std::string>>{
             {},
             {"frobnicate"},
             {"train", "--bogus"},
             {"explain", "--filter", "pass:0.6:0.2"},
             {"calculus", "--alphas", "0.5,0.2"},
             {"gen-data", "--cases", "0"},
             {"train", "--epochs", "1"}}) {
      const Run r = cli(args);
      CHECK(r.code == kExitUsage);
      CHECK(r.err.find("error") != std::string::npos);
      CHECK(r.err.find("--") != std::string::npos);
    }
  }
  SUBCASE("data errors exit 2") {
    test::TempDir dir("bad");
    const Run missing = cli({"predict", "--data", dir / "nothing", "--weights", dir / "w.nnw", "--out", dir / "o"});
    CHECK(missing.code == kExitData);
    CHECK(missing.err.rfind("error: ", 0) == 0);

    std::ofstream(dir / "w.nnw") << "not a weights file";
    REQUIRE(cli({"gen-data", "--cases", "1", "--shape", "6,8,8,8", "--out", dir / "d"}).code == 0);
    const Run corrupt = cli({"predict", "--data", dir / "d", "--weights", dir / "w.nnw", "--out", dir / "o"});
    CHECK(corrupt.code == kExitData);
    CHECK(corrupt.err.find("offset") != std::string::npos);
  }
  SUBCASE("help exits 0") { CHECK(cli({"--help"}).code == kExitOk); }
}
