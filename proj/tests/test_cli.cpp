#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "maxentmil/io.hpp"
#include "maxentmil/mil.hpp"

using namespace maxentmil;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(MAXENTMIL_TEST_SCRATCH) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MAXENTMIL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Small two-class dataset shared by several cases.
fs::path small_synth(const fs::path& dir) {
  write(dir / "synth.json", R"({"synth": {"bags": 12, "m": 8, "n_per_bag": 120}})");
  REQUIRE(run("--config " + (dir / "synth.json").string() + " synth -o " + (dir / "data").string()) ==
          0);
  return dir / "data" / "dataset.jsonl";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with status 1") {
    const fs::path dir = scratch("usage");
    CHECK(run("") == 1);
    CHECK(run("fit") == 1);
    CHECK(run("no-such-command -o " + dir.string()) == 1);
    CHECK(run("--version") == 0);
    write(dir / "bad.json", R"({"basis": {"m": 8, "colour": 3}})");
    CHECK(run("--config " + (dir / "bad.json").string() + " bench -o " + dir.string()) == 1);
    write(dir / "empty.jsonl", "{\"bag_id\":\"a\",\"instances\":[]}\n");
    CHECK(run("fit " + (dir / "empty.jsonl").string() + " -o " + (dir / "out").string()) == 1);
  }

  TEST_CASE("fit writes a resolved config and is byte-deterministic") {
    const fs::path dir = scratch("fit");
    const fs::path data = small_synth(dir);
    const std::string common = "--seed 5 fit " + data.string() + " --solver cmen --m 8 -o ";
    const int a = run(common + (dir / "a").string());
    const int b = run(common + (dir / "b").string());
    CHECK((a == 0 || a == 2));
    CHECK(a == b);
    CHECK(fs::exists(dir / "a" / "report.json"));
    CHECK(fs::exists(dir / "a" / "stats.jsonl"));
    CHECK(slurp(dir / "a" / "model.json") == slurp(dir / "b" / "model.json"));
    CHECK(slurp(dir / "a" / "stats.jsonl") == slurp(dir / "b" / "stats.jsonl"));
    const json resolved = read_json_file((dir / "a" / "resolved_config.json").string());
    CHECK(resolved.at("command") == "fit");
    CHECK(resolved.at("seed") == 5);
    CHECK(resolved.at("basis").at("m") == 8);

    CHECK(run("kl-matrix " + (dir / "a" / "model.json").string() + " --gamma 0.5 -o " +
              (dir / "kl").string()) == 0);
    CHECK(fs::exists(dir / "kl" / "kl_matrix.csv"));
    CHECK(fs::exists(dir / "kl" / "kernel.csv"));
  }

  TEST_CASE("classify matches the in-process k-fold evaluation") {
    const fs::path dir = scratch("classify");
    const fs::path data = small_synth(dir);
    REQUIRE(run("--seed 9 classify " + data.string() +
                " --distance hausdorff --folds 3 --k 2 --k-prime 3 -o " + (dir / "out").string()) ==
            0);
    const json summary = read_json_file((dir / "out" / "summary.json").string());

    PipelineConfig cfg;
    cfg.distance = BagDistance::hausdorff;
    cfg.knn.k = 2;
    cfg.knn.k_prime = 3;
    const KfoldResult ref = kfold_evaluate(read_dataset(data.string()), 3, cfg, 9);
    CHECK(summary.at("mean_accuracy").get<double>() == ref.mean_accuracy);
    CHECK(fs::exists(dir / "out" / "predictions.jsonl"));
  }

  TEST_CASE("phase diagram resumes from finished cells") {
    const fs::path dir = scratch("phase");
    write(dir / "cfg.json",
          R"({"phase": {"N": 6, "n_per_bag": 300, "reps": 2}, "grid": {"points_per_axis": 32}})");
    const std::string args = "--config " + (dir / "cfg.json").string() +
                             " phase-diagram --m-values 8 --T-values 1 2 -o " + (dir / "out").string();
    REQUIRE(run(args) == 0);
    const fs::path cell = dir / "out" / "cells" / "m8_T2.json";
    REQUIRE(fs::exists(cell));
    const std::string first = slurp(dir / "out" / "phase_cmen.json");
    const auto stamp = fs::last_write_time(cell);
    REQUIRE(run(args) == 0);
    CHECK(fs::last_write_time(cell) == stamp);
    CHECK(slurp(dir / "out" / "phase_cmen.json") == first);
  }

  TEST_CASE("synth, fit and bound-check run end to end") {
    const fs::path dir = scratch("pipeline");
    write(dir / "cfg.json",
          R"({"synth": {"bags": 6, "m": 8, "n_per_bag": 100, "format": "csv"},
              "markov": {"N": 3, "m": 6, "n": 100, "trials": 50}})");
    const std::string cfg = "--config " + (dir / "cfg.json").string();
    REQUIRE(run(cfg + " synth --kind lowrank -o " + (dir / "s").string()) == 0);
    REQUIRE(fs::exists(dir / "s" / "dataset.csv"));
    REQUIRE(fs::exists(dir / "s" / "truth.json"));
    const int fit = run(cfg + " fit " + (dir / "s" / "dataset.csv").string() + " --m 8 -o " +
                        (dir / "f").string());
    CHECK((fit == 0 || fit == 2));
    const int bound = run(cfg + " bound-check -o " + (dir / "b").string());
    CHECK((bound == 0 || bound == 2));
    CHECK(fs::exists(dir / "b" / "bound.json"));
    CHECK(fs::exists(dir / "b" / "bound.csv"));
  }
}
