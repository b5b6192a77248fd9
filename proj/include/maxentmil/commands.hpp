#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maxentmil/experiments.hpp"
#include "maxentmil/io.hpp"
#include "maxentmil/mil.hpp"

namespace maxentmil {

inline constexpr const char* kVersion = "maxentmil 0.1.0";

/// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitWarning = 2 };

struct FitSection {
  std::string solver = "cmen";  // mde | cmen | rmde | rmde-continuation | rmde-cv
  double eta = 1.0;             // rmde only
  std::vector<double> etas = default_eta_grid();  // rmde-cv only
};

struct PhaseSection {
  int N = 20;
  std::vector<int> m_values{20, 30, 40};
  std::vector<int> T_values{2, 5, 10};
  int n_per_bag = 1000;
  int reps = 10;
  std::string solver = "cmen";  // or rmde-continuation, rmde-cv, both
  int d = 2;
  double half_width = 2 * 3.141592653589793;
  double scale_exponent = 0.25;
};

struct MarkovSection {
  int N = 5;
  int m = 10;
  int n = 200;
  int trials = 200;
  std::vector<double> a_values{2.0, 5.0};
  double half_width = 2 * 3.141592653589793;
};

struct ClassifySection {
  std::string distance = "kl-cmen";
  int folds = 10;
  double gamma = 1.0;
  bool export_kernel = false;
};

/// Every parameter a command can read. Unknown keys are rejected at every
/// level when parsed from JSON.
struct RunConfig {
  std::uint64_t seed = 2024;
  int verbosity = 0;
  // basis, grid and preprocessing
  int m = 20;
  std::uint64_t basis_seed = 1;
  int points_per_axis = kDefaultPointsPerAxis;
  int mc_nodes = kDefaultMonteCarloNodes;
  std::uint64_t mc_seed = kDefaultMonteCarloSeed;
  double margin = 0.1;
  int pca_dims = 0;
  bool standardize = false;  // fit only; classification always standardizes
  // solvers
  FitSection fit;
  CmenaConfig cmen;
  RmdeConfig rmde;
  NewtonConfig newton;
  CitationKnnConfig knn;
  // commands
  PhaseSection phase;
  MarkovSection markov;
  ClassifySection classify;
  SynthConfig synth;
  std::string synth_format = "jsonl";
  BenchmarkConfig bench;

  void validate() const;
  PipelineConfig pipeline() const;
  PhaseDiagramSpec phase_spec() const;
};

json to_json(const RunConfig& cfg);
/// Starts from the defaults and overwrites every key present in `j`.
RunConfig run_config_from_json(const json& j);

int cmd_fit(const RunConfig& cfg, const std::string& data_path, const std::string& out_dir);
int cmd_phase_diagram(const RunConfig& cfg, const std::string& out_dir);
int cmd_kl_matrix(const RunConfig& cfg, const std::string& model_path,
                  const std::string& out_dir);
/// k-fold evaluation of `train_path` when `test_path` is empty.
int cmd_classify(const RunConfig& cfg, const std::string& train_path,
                 const std::string& test_path, const std::string& out_dir);
int cmd_bound_check(const RunConfig& cfg, const std::string& out_dir);
int cmd_synth(const RunConfig& cfg, const std::string& out_dir);
int cmd_bench(const RunConfig& cfg, const std::string& out_dir);

/// Parses arguments, dispatches, and maps exceptions to kExitError.
int run_cli(int argc, char** argv);

}  // namespace maxentmil
