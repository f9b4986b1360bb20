// End-to-end checks of the nnem binary: exit codes, artifacts, determinism,
// resume. The binary path arrives through the NNEM_CLI_BIN environment
// variable (set by ctest).
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nnem/runconfig.hpp"

namespace fs = std::filesystem;
using namespace nnem;

namespace {

std::string cli_bin() {
  const char* bin = std::getenv("NNEM_CLI_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

int run(const std::string& args) {
  const std::string cmd = cli_bin() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nnem_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kBaseConfig =
    "mesh.kind = unit_square\n"
    "mesh.n = 2\n"
    "envelope.kind = lagrange\n"
    "envelope.order = 2\n"
    "net.width = 6\n"
    "train.steps = 30\n"
    "train.seed = 5\n"
    "train.log_every = 10\n"
    "problem.name = laplace_sine\n";

}  // namespace

TEST_CASE("config parsing validates keys and ranges", "[cli]") {
  CHECK_NOTHROW(parse_run_config(kBaseConfig));
  CHECK_THROWS_WITH(parse_run_config("train.lrr = 1\n"),
                    Catch::Matchers::ContainsSubstring("train.lrr"));
  CHECK_THROWS_WITH(parse_run_config("mesh.n = 0\n"),
                    Catch::Matchers::ContainsSubstring("mesh.n"));
  CHECK_THROWS_WITH(parse_run_config("quad.triangle_points = 35\n"),
                    Catch::Matchers::ContainsSubstring("quad.triangle_points"));
  CHECK_THROWS_WITH(parse_run_config("net.activation = relu\n"),
                    Catch::Matchers::ContainsSubstring("net.activation"));
  CHECK_THROWS_WITH(parse_run_config("problem.name = unknown\n"),
                    Catch::Matchers::ContainsSubstring("problem.name"));
  CHECK_THROWS_WITH(parse_run_config("mesh.kind = file\n"),
                    Catch::Matchers::ContainsSubstring("mesh.path"));
  CHECK_THROWS_WITH(parse_run_config("train.steps = 1\ntrain.steps = 2\n"),
                    Catch::Matchers::ContainsSubstring("duplicate"));
  // The signature pins the reproducibility-relevant keys.
  const RunConfig cfg = parse_run_config(kBaseConfig);
  const std::string sig = cfg.canonical_signature();
  CHECK(sig.find("mesh.n=2\n") != std::string::npos);
  CHECK(sig.find("train.seed=5\n") != std::string::npos);
}

TEST_CASE("solve writes artifacts and succeeds", "[cli]") {
  const fs::path dir = fresh_dir("solve");
  write(dir / "run.cfg", std::string(kBaseConfig) + "output.dir = " + (dir / "out").string() + "\n");
  CHECK(run("solve --config " + (dir / "run.cfg").string()) == 0);
  CHECK(fs::exists(dir / "out" / "loss_history.csv"));
  CHECK(fs::exists(dir / "out" / "report.csv"));
  CHECK(fs::exists(dir / "out" / "checkpoint.bin"));
}

TEST_CASE("bad config key exits with code 2", "[cli]") {
  const fs::path dir = fresh_dir("badkey");
  write(dir / "bad.cfg", std::string(kBaseConfig) + "train.lrr = 1\n");
  CHECK(run("solve --config " + (dir / "bad.cfg").string()) == 2);
  CHECK(run("solve --config " + (dir / "missing.cfg").string()) == 2);
}

TEST_CASE("identical seeded runs produce byte-identical loss histories", "[cli]") {
  const fs::path dir = fresh_dir("determinism");
  write(dir / "run.cfg", std::string(kBaseConfig));
  const std::string base = "solve --config " + (dir / "run.cfg").string();
  REQUIRE(run(base + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run(base + " --out " + (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "loss_history.csv") == slurp(dir / "b" / "loss_history.csv"));
  CHECK(slurp(dir / "a" / "checkpoint.bin") == slurp(dir / "b" / "checkpoint.bin"));
  // A different seed changes the history.
  REQUIRE(run(base + " --out " + (dir / "c").string() + " --seed 6") == 0);
  CHECK(slurp(dir / "a" / "loss_history.csv") != slurp(dir / "c" / "loss_history.csv"));
}

TEST_CASE("resume continues deterministically", "[cli]") {
  const fs::path dir = fresh_dir("resume");
  // Full run to 30 steps.
  write(dir / "run30.cfg", std::string(kBaseConfig) + "output.dir = " + (dir / "full").string() + "\n");
  REQUIRE(run("solve --config " + (dir / "run30.cfg").string()) == 0);
  // 12 steps, then resume to 30.
  std::string cfg12(kBaseConfig);
  cfg12.replace(cfg12.find("train.steps = 30"), 16, "train.steps = 12");
  write(dir / "run12.cfg", cfg12 + "output.dir = " + (dir / "part").string() + "\n");
  REQUIRE(run("solve --config " + (dir / "run12.cfg").string()) == 0);
  write(dir / "resume.cfg", std::string(kBaseConfig) + "output.dir = " + (dir / "resumed").string() + "\n");
  REQUIRE(run("solve --config " + (dir / "resume.cfg").string() + " --resume " +
              (dir / "part" / "checkpoint.bin").string()) == 0);
  CHECK(slurp(dir / "resumed" / "checkpoint.bin") == slurp(dir / "full" / "checkpoint.bin"));
  // A checkpoint from a different configuration is refused as a config error.
  std::string other(kBaseConfig);
  other.replace(other.find("mesh.n = 2"), 10, "mesh.n = 3");
  write(dir / "other.cfg", other);
  CHECK(run("solve --config " + (dir / "other.cfg").string() + " --resume " +
            (dir / "part" / "checkpoint.bin").string()) == 2);
}

TEST_CASE("study emits per-method and combined tables", "[cli]") {
  const fs::path dir = fresh_dir("study");
  write(dir / "study.cfg",
        "mesh.kind = unit_square\nenvelope.kind = lagrange\nenvelope.order = 2\n"
        "problem.name = laplace_sine\nstudy.methods = fem\nstudy.mesh_sizes = 2,4\n"
        "output.dir = " + (dir / "out").string() + "\n");
  CHECK(run("study --config " + (dir / "study.cfg").string()) == 0);
  CHECK(fs::exists(dir / "out" / "study_FEMP2.csv"));
  CHECK(fs::exists(dir / "out" / "study_combined.csv"));
  const std::string csv = slurp(dir / "out" / "study_FEMP2.csv");
  CHECK(csv.rfind("method,h,N,e_H1,e_L2,order_H1,order_L2,steps,seconds", 0) == 0);

  write(dir / "empty.cfg",
        "study.methods = fem\nstudy.mesh_sizes = 2\noutput.dir = x\n");
  CHECK(run("study --config " + (dir / "empty.cfg").string()) == 2);
}

TEST_CASE("check passes on the default setup and fails loudly when degraded", "[cli]") {
  const fs::path dir = fresh_dir("check");
  write(dir / "ok.cfg", std::string(kBaseConfig));
  CHECK(run("check --config " + (dir / "ok.cfg").string()) == 0);
  // A one-point triangle rule cannot integrate degree 5.
  write(dir / "coarse.cfg", std::string(kBaseConfig) + "quad.triangle_points = 1\n");
  CHECK(run("check --config " + (dir / "coarse.cfg").string()) == 4);
  // A mesh file with a degenerate (zero-area) triangle fails regularity.
  write(dir / "degenerate.mesh",
        "nnem-mesh v1\nvertices 4\n0 0 1\n1 0 1\n2 0 1\n0 1 1\ntriangles 2\n0 1 3\n0 1 2\n");
  write(dir / "degen.cfg",
        std::string("mesh.kind = file\nmesh.path = ") + (dir / "degenerate.mesh").string() + "\n");
  CHECK(run("check --config " + (dir / "degen.cfg").string()) == 4);
}
