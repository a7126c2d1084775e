#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flimzs/cli/commands.hpp"
#include "flimzs/cli/fph.hpp"
#include "flimzs/cli/gradcheck_suite.hpp"
#include "flimzs/cli/run_config.hpp"
#include "flimzs/errors.hpp"
#include "flimzs/rng.hpp"

using namespace flimzs;
using namespace flimzs::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("flimzs_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

std::vector<std::string> csv_lines(const std::string& path) {
  std::ifstream f(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(f, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("fph round trip preserves planes and omega") {
  FphContainer c;
  c.width = 3;
  c.height = 2;
  c.omega = 1.2566370614359172e9;
  Plane g(3, 2), tau(3, 2);
  for (std::size_t k = 0; k < 6; ++k) {
    g.data[k] = 0.125 * k;
    tau.data[k] = 2.5 + k;
  }
  c.add("g", g);
  c.add("tau", tau);
  const std::string bytes = encode_fph(c);
  CHECK(bytes.size() == 24 + 2 * (16 + 6 * 4));
  CHECK(bytes.substr(0, 4) == "FPH1");
  const FphContainer d = decode_fph(bytes);
  CHECK(d.width == 3);
  CHECK(d.height == 2);
  CHECK(d.omega == c.omega);
  CHECK(d.plane("g") == g);
  CHECK(d.plane("tau") == tau);
  CHECK_THROWS_AS(d.plane("s"), IoError);
}

TEST_CASE("fph decoding rejects malformed input") {
  FphContainer c;
  c.width = c.height = 2;
  c.omega = 1.0;
  c.add("I", Plane(2, 2, 1.0));
  const std::string good = encode_fph(c);
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_fph(bad), IoError);
  CHECK_THROWS_AS(decode_fph(good.substr(0, good.size() - 1)), IoError);
  CHECK_THROWS_AS(decode_fph(good + "x"), IoError);
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_fph(bad), IoError);
  CHECK_FALSE(is_known_plane_name("q"));
  c.add("q", Plane(2, 2));
  CHECK_THROWS_AS(encode_fph(c), IoError);
  CHECK_THROWS_AS(read_fph("/nonexistent/dir/file.fph"), IoError);
}

TEST_CASE("run config serialization is a fixed point") {
  RunConfig base;
  base.scene = phasor::two_region_scene(48, 40, 1.5, 3.5, 0.4, 1.0, phasor::RegionShape::rectangle);
  base.noise.photon_scale = 33.0;
  base.noise.seed = 12345678901234ULL;
  base.prior.kind = prior::PriorKind::gaussian;
  base.zero_shot.weights = {0.5, 0.25, 0.0};
  base.zero_shot.iterations = 17;
  const std::string text = serialize_run_config(base);
  const RunConfig parsed = parse_run_config(text);
  CHECK(serialize_run_config(parsed) == text);
  CHECK(parsed.noise.seed == 12345678901234ULL);
  CHECK(parsed.scene.regions.size() == 1);
  CHECK(parsed.zero_shot.weights.structure == 0.25);
}

TEST_CASE("run config errors name the offending line") {
  try {
    parse_run_config("# comment\n\nnoise.seed = 3\nbogus.key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config("zero_shot.iterations = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("no equals sign\n"), ConfigError);
  CHECK(parse_run_config("noise.seed = 9\n").noise.seed == 9);
}

TEST_CASE("usage errors exit with code 2") {
  TempDir dir("usage");
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"synth", "--out", dir / "a", "--width", "0"}).code == kExitUsage);
  CHECK(run({"synth", "--out", dir / "a", "--mode", "loud"}).code == kExitUsage);
  CHECK(run({"gradcheck", "--op", "softmax"}).code == kExitUsage);
  CHECK(run({"denoise", "--in", dir / "x.fph"}).code == kExitUsage);
}

TEST_CASE("synth, eval and exit codes for bad inputs") {
  TempDir dir("synth");
  const Run s = run({"synth", "--out", dir.path.string(), "--width", "32", "--height", "32",
                     "--seed", "5"});
  REQUIRE(s.code == kExitOk);
  const FphContainer clean = read_fph(dir / "clean.fph");
  const FphContainer noisy = read_fph(dir / "noisy.fph");
  for (const char* name : {"g", "s", "I", "tau"}) CHECK(clean.find(name));
  for (const char* name : {"y_g", "y_s", "y_I"}) CHECK(noisy.find(name));
  CHECK(clean.width == 32);

  const Run same = run({"synth", "--out", dir / "again", "--width", "32", "--height", "32",
                        "--seed", "5"});
  REQUIRE(same.code == kExitOk);
  CHECK(read_file(dir / "again/noisy.fph") == read_file(dir / "noisy.fph"));
  run({"synth", "--out", dir / "other", "--width", "32", "--height", "32", "--seed", "6"});
  CHECK(read_file(dir / "other/noisy.fph") != read_file(dir / "noisy.fph"));

  const Run ident = run({"eval", "--pred", dir / "clean.fph", "--truth", dir / "clean.fph",
                         "--report", dir / "r.csv", "--method", "identity"});
  REQUIRE(ident.code == kExitOk);
  const auto lines = csv_lines(dir / "r.csv");
  REQUIRE(lines.size() == 2);
  CHECK(lines[1].rfind("sample,identity,inf,inf,inf,1,1,1,0,", 0) == 0);
  run({"eval", "--pred", dir / "noisy.fph", "--truth", dir / "clean.fph", "--report",
       dir / "r.csv"});
  CHECK(csv_lines(dir / "r.csv").size() == 3);

  // The noisy file has no tau plane, so it cannot serve as the truth.
  CHECK(run({"eval", "--pred", dir / "clean.fph", "--truth", dir / "noisy.fph"}).code ==
        kExitUsage);
  CHECK(run({"eval", "--pred", dir / "missing.fph", "--truth", dir / "clean.fph"}).code ==
        kExitIo);
  write_file_atomic(dir / "junk.fph", "not an fph file");
  CHECK(run({"eval", "--pred", dir / "junk.fph", "--truth", dir / "clean.fph"}).code == kExitIo);
  const Run other_size = run({"synth", "--out", dir / "small", "--width", "16", "--height", "16"});
  REQUIRE(other_size.code == kExitOk);
  CHECK(run({"eval", "--pred", dir / "small/clean.fph", "--truth", dir / "clean.fph"}).code ==
        kExitUsage);
}

TEST_CASE("frame averaging shrinks the noise by the square root of the frame count") {
  TempDir dir("frames");
  REQUIRE(run({"synth", "--out", dir.path.string(), "--frames", "15", "--seed", "3"}).code ==
          kExitOk);
  const FphContainer clean = read_fph(dir / "clean.fph");
  const Plane gi = clean.plane("g"), inten = clean.plane("I");
  auto residual = [&](const std::string& file) {
    const Plane yg = read_fph(dir / file).plane("y_g");
    std::vector<double> r;
    for (std::size_t k = 0; k < yg.size(); ++k) {
      if (inten.data[k] == inten.data[0]) r.push_back(yg.data[k] - gi.data[k] * inten.data[k]);
    }
    return r;
  };
  const double single = stddev(residual("noisy.fph"));
  const double averaged = stddev(residual("avg.fph"));
  CHECK(averaged / single == doctest::Approx(1.0 / std::sqrt(15.0)).epsilon(0.10));
  CHECK(std::abs(mean(residual("avg.fph"))) < 3 * averaged / std::sqrt(1000.0) + 1e-3);
}

TEST_CASE("config file values are overridden by explicit flags") {
  TempDir dir("config");
  RunConfig cfg;
  cfg.scene.width = 16;
  cfg.scene.height = 16;
  cfg.noise.seed = 77;
  write_file_atomic(dir / "run.cfg", serialize_run_config(cfg));
  REQUIRE(run({"synth", "--out", dir / "a", "--config", dir / "run.cfg"}).code == kExitOk);
  CHECK(read_fph(dir / "a/clean.fph").width == 16);
  REQUIRE(run({"synth", "--out", dir / "b", "--config", dir / "run.cfg", "--width", "24"}).code ==
          kExitOk);
  CHECK(read_fph(dir / "b/clean.fph").width == 24);
  CHECK(read_fph(dir / "b/clean.fph").height == 16);
  write_file_atomic(dir / "bad.cfg", "scene.colour = red\n");
  CHECK(run({"synth", "--out", dir / "c", "--config", dir / "bad.cfg"}).code == kExitUsage);
}

TEST_CASE("denoise writes outputs, a trace and a rendering") {
  TempDir dir("denoise");
  REQUIRE(run({"synth", "--out", dir.path.string(), "--width", "16", "--height", "16"}).code ==
          kExitOk);
  const std::vector<std::string> base{"denoise", "--in",     dir / "noisy.fph", "--prior",
                                      "gaussian", "--patch", "16",              "--seed",
                                      "4"};
  auto args = base;
  args.insert(args.end(), {"--out", dir / "d1.fph", "--iters", "1", "--trace", dir / "t.csv",
                           "--render", dir / "r.ppm"});
  REQUIRE(run(args).code == kExitOk);
  const auto trace = csv_lines(dir / "t.csv");
  CHECK(trace.size() == 2);
  CHECK(trace[0] == "iteration,lr,total,intensity,fidelity,structure,tv");
  CHECK(read_file(dir / "r.ppm").rfind("P6\n16 16\n255\n", 0) == 0);
  const FphContainer d = read_fph(dir / "d1.fph");
  for (const char* name : {"y_g", "y_s", "y_I", "tau"}) CHECK(d.find(name));

  args = base;
  args.insert(args.end(), {"--out", dir / "d2.fph", "--iters", "3"});
  REQUIRE(run(args).code == kExitOk);
  args = base;
  args.insert(args.end(), {"--out", dir / "d3.fph", "--iters", "3"});
  REQUIRE(run(args).code == kExitOk);
  CHECK(read_file(dir / "d2.fph") == read_file(dir / "d3.fph"));

  args = base;
  args.insert(args.end(), {"--out", dir / "d4.fph", "--patch", "32"});
  CHECK(run(args).code == kExitUsage);
  args = base;
  args.insert(args.end(), {"--out", dir / "d5.fph", "--lambda1", "-1"});
  CHECK(run(args).code == kExitUsage);
  CHECK_FALSE(fs::exists(dir / "d4.fph"));
}

TEST_CASE("ablate runs every arm and writes one row each") {
  TempDir dir("ablate");
  REQUIRE(run({"synth", "--out", dir.path.string(), "--width", "16", "--height", "16"}).code ==
          kExitOk);
  const Run r = run({"ablate", "--in", dir / "noisy.fph", "--truth", dir / "clean.fph",
                     "--out-dir", dir / "abl", "--prior", "gaussian", "--iters", "2", "--patch",
                     "16", "--sample-id", "tiny"});
  REQUIRE(r.code == kExitOk);
  const auto lines = csv_lines(dir / "abl/ablation.csv");
  REQUIRE(lines.size() == 7);
  const auto names = ablation_arm_names();
  REQUIRE(names.size() == 6);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(lines[k + 1].rfind("tiny," + names[k] + ",", 0) == 0);
    CHECK(fs::exists(dir / ("abl/arm" + std::to_string(k + 1) + ".fph")));
  }
  CHECK(run({"ablate", "--in", dir / "noisy.fph", "--truth", dir / "noisy.fph", "--out-dir",
             dir / "abl2", "--prior", "gaussian", "--iters", "1", "--patch", "16"})
            .code == kExitUsage);
}

TEST_CASE("gradcheck subcommand") {
  const Run one = run({"gradcheck", "--op", "ssim"});
  CHECK(one.code == kExitOk);
  CHECK(one.out.find("ssim") != std::string::npos);
  CHECK(one.out.find("PASS") != std::string::npos);
  CHECK(std::count(one.out.begin(), one.out.end(), '\n') == 1);
  // A step this coarse destroys the central-difference estimate.
  const Run coarse = run({"gradcheck", "--op", "ssim", "--h", "1.0"});
  CHECK(coarse.code == kExitGradCheck);
  CHECK(run({"gradcheck", "--h", "0"}).code == kExitUsage);
  CHECK(gradcheck_names().size() == 12);
}
