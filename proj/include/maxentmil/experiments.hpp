#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "maxentmil/mil.hpp"
#include "maxentmil/solvers.hpp"

namespace maxentmil {

/// Mixes `parts` into `base` (splitmix64 chain). Used to give every work item
/// its own RNG stream independent of scheduling order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

/// A B with A (m x T), B (T x N) i.i.d. normal(0, scale^2). scale <= 0 picks
/// 1/sqrt(m).
LambdaMatrix synth_lowrank_lambda(int m, int N, int T, std::uint64_t seed, double scale = 0.0);

struct SampleSet {
  Mat instances;  // n x d
  double acceptance_rate = 0.0;
  long proposals = 0;
};

/// Uniform-proposal rejection sampling with envelope 1.1 times the largest
/// unnormalized density on the grid nodes.
SampleSet rejection_sample(const MEDensity& density, const Quadrature& quad, int n,
                           std::uint64_t seed);

inline constexpr long kRejectionProbeBatch = 20000;
inline constexpr double kMinAcceptanceRate = 1e-4;

/// Smallest singular value above 1e-10 relative to the largest; 0 for a zero
/// matrix.
double smallest_nonzero_singular_value(const Mat& x);

/// mean - 3 std (population) of the smallest nonzero singular values,
/// floored at 1e-12.
double recovery_threshold(const std::vector<LambdaMatrix>& truths);

enum class PhaseSolver { cmen, rmde_continuation, rmde_cv };

std::string to_string(PhaseSolver s);
PhaseSolver phase_solver_from_string(const std::string& s);

struct PhaseDiagramSpec {
  int N = 20;
  std::vector<int> m_values{20, 30, 40};
  std::vector<int> T_values{2, 5, 10};
  int n_per_bag = 1000;
  int reps = 10;
  std::uint64_t base_seed = 2024;
  PhaseSolver solver = PhaseSolver::cmen;
  int d = 2;
  double half_width = 2 * 3.141592653589793;  // synthetic domain [-w, w]^d
  int points_per_axis = kDefaultPointsPerAxis;
  // Factor entries have standard deviation m^(-scale_exponent); 0.25 keeps
  // lambda . phi of order one for every m.
  double scale_exponent = 0.25;
  CmenaConfig cmen;
  RmdeConfig rmde;
  NewtonConfig newton;

  void validate() const;
};

struct PhaseCell {
  int m = 0;
  int T = 0;
  double recovery_probability = 0.0;
  double threshold = 0.0;
  std::vector<int> ranks;  // -1 when the rep failed before producing a fit
  std::vector<bool> warnings;
  double wall_time = 0.0;
};

/// Ground truth and sampled summaries for one (m, T, rep) work item.
struct PhaseInstance {
  BasisSpec basis;
  LambdaMatrix truth;
  std::vector<SufficientStats> stats;
};

Domain synthetic_domain(int d, double half_width);

PhaseInstance make_phase_instance(const PhaseDiagramSpec& spec, int m, int T, int rep,
                                  const Quadrature& quad);

/// Runs every rep of one cell for each listed solver; reps share sampled data
/// across solvers. Result i corresponds to solvers[i].
std::vector<PhaseCell> run_phase_cell(const PhaseDiagramSpec& spec, int m, int T,
                                      const std::vector<PhaseSolver>& solvers);

/// Full sweep with spec.solver. Cells in row-major (m, T) order.
std::vector<PhaseCell> run_phase_diagram(const PhaseDiagramSpec& spec);

enum class SynthKind { lowrank, two_class };

std::string to_string(SynthKind k);
SynthKind synth_kind_from_string(const std::string& s);

/// Bags of raw instances drawn from known max-entropy densities.
/// lowrank: one unlabeled group, lambda = A B as in synth_lowrank_lambda.
/// two_class: each class c has its own factor A_c (m x T); bag i of class c
/// gets lambda_i = A_c (1 + spread * e_i) with e_i standard normal, so the
/// classes form two clusters in separate rank-T subspaces.
struct SynthConfig {
  SynthKind kind = SynthKind::two_class;
  int bags = 40;  // total; split evenly between classes for two_class
  int m = 20;
  int T = 2;
  int n_per_bag = 500;
  int d = 2;
  double half_width = 2 * 3.141592653589793;
  double scale_exponent = 0.25;  // factor entries have std m^(-scale_exponent)
  double spread = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthDataset {
  LabeledBagDataset data;
  LambdaMatrix truth;
  BasisSpec basis;
  Domain domain;
};

SynthDataset synth_dataset(const SynthConfig& cfg);

struct MarkovTrialResult {
  std::vector<double> a_values;
  std::vector<double> exceedance;  // fraction of trials with sum n_i KL >= aNm/2
  std::vector<double> divergences;  // per-trial sum n_i KL(p_hat_i || p_i)
  int failed_trials = 0;
};

MarkovTrialResult markov_bound_trial(int N, int m, int n, int trials,
                                     const std::vector<double>& a_values, std::uint64_t seed,
                                     double half_width = 2 * 3.141592653589793);

struct BenchmarkConfig {
  int m = 40;
  int d = 2;
  int n_stats = 50000;  // suff_stats sizes: n, 2n
  int kl_bags = 150;
  int n_kl = 200;       // bag size behind the KL-matrix densities: n, 2n
  int n_hausdorff = 400;
  int repeats = 7;
  std::uint64_t seed = 7;
};

struct BenchmarkRow {
  std::string operation;
  int n_small = 0;
  int n_large = 0;
  double seconds_small = 0.0;
  double seconds_large = 0.0;
  double ratio() const { return seconds_small > 0 ? seconds_large / seconds_small : 0.0; }
};

/// Timing of suff_stats, the pairwise sym_kl matrix and avg_hausdorff under a
/// doubling of the per-bag instance count. Each time is the minimum over
/// `repeats` runs.
std::vector<BenchmarkRow> runtime_benchmark(const BenchmarkConfig& cfg);

}  // namespace maxentmil
