#include "maxentmil/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "maxentmil/error.hpp"
#include "maxentmil/mil.hpp"
#include "maxentmil/parallel.hpp"

namespace maxentmil {
namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class F>
double min_time(int repeats, F&& body) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    body();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

std::vector<SufficientStats> sample_bags(const LambdaMatrix& truth, const Quadrature& quad,
                                         int n, std::uint64_t seed) {
  std::vector<SufficientStats> stats(static_cast<std::size_t>(truth.bags()));
  for (Eigen::Index i = 0; i < truth.bags(); ++i) {
    const auto& id = truth.bag_ids[static_cast<std::size_t>(i)];
    const MEDensity p = make_density(truth.data.col(i), quad, id);
    const SampleSet s =
        rejection_sample(p, quad, n, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    stats[static_cast<std::size_t>(i)] = suff_stats(s.instances, quad.basis(), id);
  }
  return stats;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

LambdaMatrix synth_lowrank_lambda(int m, int N, int T, std::uint64_t seed, double scale) {
  if (m < 1 || N < 1 || T < 1 || T > std::min(m, N))
    throw std::invalid_argument("synth_lowrank_lambda: need 1 <= T <= min(m, N)");
  if (!(scale > 0)) scale = 1.0 / std::sqrt(static_cast<double>(m));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Mat a(m, T), b(T, N);
  for (int i = 0; i < m; ++i)
    for (int t = 0; t < T; ++t) a(i, t) = normal(rng);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < N; ++j) b(t, j) = normal(rng);
  LambdaMatrix out;
  out.data = a * b;
  out.bag_ids.reserve(static_cast<std::size_t>(N));
  for (int j = 0; j < N; ++j) out.bag_ids.push_back("bag" + std::to_string(j));
  return out;
}

SampleSet rejection_sample(const MEDensity& density, const Quadrature& quad, int n,
                           std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("rejection_sample: n must be >= 0");
  const BasisSpec& basis = quad.basis();
  if (basis.d < 1 || basis.freqs.rows() != basis.pairs())
    throw std::invalid_argument("rejection_sample: quadrature has no trigonometric basis");
  if (density.lambda.size() != quad.m())
    throw std::invalid_argument("rejection_sample: density does not match the basis");

  const Domain& dom = quad.grid().domain;
  const double log_envelope = (quad.features() * density.lambda).maxCoeff() + std::log(1.1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec width = dom.hi() - dom.lo();

  SampleSet out;
  out.instances.resize(n, basis.d);
  Vec x(basis.d);
  long accepted = 0;
  while (accepted < n) {
    for (int j = 0; j < basis.d; ++j) x[j] = dom.lo()[j] + width[j] * unit(rng);
    const double u = unit(rng);
    ++out.proposals;
    const double log_ratio = eval_basis(basis, x).dot(density.lambda) - log_envelope;
    if (std::log(u) < log_ratio) out.instances.row(accepted++) = x.transpose();
    if (out.proposals == kRejectionProbeBatch &&
        static_cast<double>(accepted) / static_cast<double>(out.proposals) <
            kMinAcceptanceRate)
      throw DegenerateDensityError("rejection_sample: acceptance rate below 1e-4 on bag '" +
                                   density.bag_id + "'");
  }
  out.acceptance_rate =
      out.proposals > 0 ? static_cast<double>(accepted) / static_cast<double>(out.proposals)
                        : 0.0;
  return out;
}

double smallest_nonzero_singular_value(const Mat& x) {
  if (x.size() == 0) return 0.0;
  const Vec s = svd(x).S;
  if (s.size() == 0 || s[0] <= 0.0) return 0.0;
  double smallest = s[0];
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > 1e-10 * s[0]) smallest = s[i];
  return smallest;
}

double recovery_threshold(const std::vector<LambdaMatrix>& truths) {
  if (truths.empty()) throw std::invalid_argument("recovery_threshold: empty ensemble");
  std::vector<double> v;
  v.reserve(truths.size());
  for (const auto& t : truths) v.push_back(smallest_nonzero_singular_value(t.data));
  double mean = 0.0;
  for (double s : v) mean += s;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double s : v) var += (s - mean) * (s - mean);
  var /= static_cast<double>(v.size());
  return std::max(mean - 3.0 * std::sqrt(var), 1e-12);
}

std::string to_string(PhaseSolver s) {
  switch (s) {
    case PhaseSolver::cmen:
      return "cmen";
    case PhaseSolver::rmde_continuation:
      return "rmde-continuation";
    case PhaseSolver::rmde_cv:
      return "rmde-cv";
  }
  return "unknown";
}

PhaseSolver phase_solver_from_string(const std::string& s) {
  if (s == "cmen") return PhaseSolver::cmen;
  if (s == "rmde-continuation") return PhaseSolver::rmde_continuation;
  if (s == "rmde-cv") return PhaseSolver::rmde_cv;
  throw std::invalid_argument("unknown solver '" + s +
                              "' (expected cmen, rmde-continuation or rmde-cv)");
}

void PhaseDiagramSpec::validate() const {
  if (N < 1 || n_per_bag < 1 || reps < 1 || d < 1 || !(half_width > 0) || points_per_axis < 2 ||
      !(scale_exponent > 0))
    throw std::invalid_argument("phase diagram: N, n_per_bag, reps, d, half_width must be positive");
  if (m_values.empty() || T_values.empty())
    throw std::invalid_argument("phase diagram: m_values and T_values must be nonempty");
  for (int m : m_values) {
    if (m < 2 || m % 2 != 0) throw std::invalid_argument("phase diagram: m values must be even");
    for (int t : T_values)
      if (t < 1 || t >= m || t > N)
        throw std::invalid_argument("phase diagram: every T must satisfy 1 <= T < m and T <= N");
  }
  cmen.validate();
  rmde.validate();
  newton.validate();
}

Domain synthetic_domain(int d, double half_width) {
  return Domain(Vec::Constant(d, -half_width), Vec::Constant(d, half_width));
}

PhaseInstance make_phase_instance(const PhaseDiagramSpec& spec, int m, int T, int rep,
                                  const Quadrature& quad) {
  const auto um = static_cast<std::uint64_t>(m);
  const auto ut = static_cast<std::uint64_t>(T);
  const auto ur = static_cast<std::uint64_t>(rep);
  PhaseInstance inst;
  inst.basis = quad.basis();
  inst.truth = synth_lowrank_lambda(m, spec.N, T, derive_seed(spec.base_seed, {um, ut, ur, 2}),
                                    std::pow(static_cast<double>(m), -spec.scale_exponent));
  inst.stats = sample_bags(inst.truth, quad, spec.n_per_bag,
                           derive_seed(spec.base_seed, {um, ut, ur, 3}));
  return inst;
}

std::vector<PhaseCell> run_phase_cell(const PhaseDiagramSpec& spec, int m, int T,
                                      const std::vector<PhaseSolver>& solvers) {
  spec.validate();
  if (solvers.empty()) throw std::invalid_argument("run_phase_cell: no solvers");
  const auto t0 = Clock::now();
  const auto um = static_cast<std::uint64_t>(m);
  const auto ut = static_cast<std::uint64_t>(T);
  const auto reps = static_cast<std::size_t>(spec.reps);

  std::vector<LambdaMatrix> truths(reps);
  for (std::size_t r = 0; r < reps; ++r)
    truths[r] = synth_lowrank_lambda(m, spec.N, T, derive_seed(spec.base_seed, {um, ut, r, 2}),
                                     std::pow(static_cast<double>(m), -spec.scale_exponent));
  const double threshold = recovery_threshold(truths);
  const IntegrationGrid grid =
      make_tensor_grid(synthetic_domain(spec.d, spec.half_width), spec.points_per_axis);

  const std::size_t ns = solvers.size();
  std::vector<int> ranks(reps * ns, -1);
  std::vector<char> warned(reps * ns, 0);
  parallel_for(reps, [&](std::size_t r) {
    const Quadrature quad(make_basis(spec.d, m, derive_seed(spec.base_seed, {um, ut, r, 1})),
                          grid);
    const PhaseInstance inst = make_phase_instance(spec, m, T, static_cast<int>(r), quad);
    LambdaMatrix hat;
    try {
      hat = fit_mde(inst.stats, quad, spec.newton);
    } catch (const std::exception&) {
      for (std::size_t s = 0; s < ns; ++s) warned[r * ns + s] = 1;
      return;
    }
    for (std::size_t s = 0; s < ns; ++s) {
      try {
        SolverResult res;
        switch (solvers[s]) {
          case PhaseSolver::cmen:
            res = fit_cmen(inst.stats, quad, hat, spec.cmen);
            break;
          case PhaseSolver::rmde_continuation:
            res = rmde_continuation(inst.stats, quad, hat, spec.rmde);
            break;
          case PhaseSolver::rmde_cv:
            res = rmde_cross_validate(inst.stats, quad, default_eta_grid(),
                                      derive_seed(spec.base_seed, {um, ut, r, 4}), spec.rmde,
                                      spec.newton)
                      .refit;
            break;
        }
        ranks[r * ns + s] = numeric_rank(res.lambda.data, threshold);
        warned[r * ns + s] = res.report.warning ? 1 : 0;
      } catch (const std::exception&) {
        warned[r * ns + s] = 1;
      }
    }
  });

  std::vector<PhaseCell> cells(ns);
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  for (std::size_t s = 0; s < ns; ++s) {
    PhaseCell& c = cells[s];
    c.m = m;
    c.T = T;
    c.threshold = threshold;
    c.wall_time = elapsed;
    int hits = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      c.ranks.push_back(ranks[r * ns + s]);
      c.warnings.push_back(warned[r * ns + s] != 0);
      if (ranks[r * ns + s] == T) ++hits;
    }
    c.recovery_probability = static_cast<double>(hits) / static_cast<double>(reps);
  }
  return cells;
}

std::vector<PhaseCell> run_phase_diagram(const PhaseDiagramSpec& spec) {
  spec.validate();
  std::vector<PhaseCell> out;
  for (int m : spec.m_values)
    for (int t : spec.T_values) out.push_back(run_phase_cell(spec, m, t, {spec.solver}).front());
  return out;
}

std::string to_string(SynthKind k) {
  return k == SynthKind::lowrank ? "lowrank" : "two-class";
}

SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "lowrank") return SynthKind::lowrank;
  if (s == "two-class") return SynthKind::two_class;
  throw std::invalid_argument("unknown synth kind '" + s + "' (lowrank | two-class)");
}

void SynthConfig::validate() const {
  if (bags < 1 || m < 2 || m % 2 != 0 || T < 1 || n_per_bag < 1 || d < 1)
    throw std::invalid_argument("synth: need bags >= 1, even m >= 2, T >= 1, n >= 1, d >= 1");
  if (kind == SynthKind::two_class && (bags < 2 || bags % 2 != 0))
    throw std::invalid_argument("synth: two-class needs an even bag count");
  if (kind == SynthKind::lowrank && T > std::min(m, bags))
    throw std::invalid_argument("synth: T must not exceed min(m, bags)");
  if (kind == SynthKind::two_class && T > m)
    throw std::invalid_argument("synth: T must not exceed m");
  if (!(half_width > 0) || !(spread >= 0))
    throw std::invalid_argument("synth: half_width must be > 0 and spread >= 0");
}

SynthDataset synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset out;
  out.domain = synthetic_domain(cfg.d, cfg.half_width);
  out.basis = make_basis(cfg.d, cfg.m, derive_seed(cfg.seed, {1}));
  const double scale = std::pow(static_cast<double>(cfg.m), -cfg.scale_exponent);
  std::vector<std::string> labels;
  if (cfg.kind == SynthKind::lowrank) {
    out.truth = synth_lowrank_lambda(cfg.m, cfg.bags, cfg.T, derive_seed(cfg.seed, {2}), scale);
    labels.assign(static_cast<std::size_t>(cfg.bags), std::string());
  } else {
    std::mt19937_64 rng(derive_seed(cfg.seed, {2}));
    std::normal_distribution<double> normal(0.0, 1.0);
    const int per_class = cfg.bags / 2;
    out.truth.data.resize(cfg.m, cfg.bags);
    for (int c = 0; c < 2; ++c) {
      Mat factor(cfg.m, cfg.T);
      for (Eigen::Index i = 0; i < factor.size(); ++i) factor.data()[i] = scale * normal(rng);
      for (int b = 0; b < per_class; ++b) {
        Vec coef(cfg.T);
        for (int t = 0; t < cfg.T; ++t) coef(t) = 1.0 + cfg.spread * normal(rng);
        out.truth.data.col(c * per_class + b) = factor * coef;
        labels.push_back(c == 0 ? "neg" : "pos");
      }
    }
    for (int j = 0; j < cfg.bags; ++j) out.truth.bag_ids.push_back("bag" + std::to_string(j));
  }
  const Quadrature quad(out.basis, make_tensor_grid(out.domain, kDefaultPointsPerAxis));
  out.data.bags.resize(static_cast<std::size_t>(cfg.bags));
  parallel_for(static_cast<std::size_t>(cfg.bags), [&](std::size_t i) {
    const auto& id = out.truth.bag_ids[i];
    const MEDensity p = make_density(out.truth.data.col(static_cast<Eigen::Index>(i)), quad, id);
    out.data.bags[i] = Bag{id, labels[i],
                           rejection_sample(p, quad, cfg.n_per_bag, derive_seed(cfg.seed, {3, i}))
                               .instances};
  });
  return out;
}

MarkovTrialResult markov_bound_trial(int N, int m, int n, int trials,
                                     const std::vector<double>& a_values, std::uint64_t seed,
                                     double half_width) {
  if (trials < 50) throw std::invalid_argument("markov_bound_trial: trials must be >= 50");
  if (a_values.empty()) throw std::invalid_argument("markov_bound_trial: no a values");
  for (double a : a_values)
    if (!(a > 0)) throw std::invalid_argument("markov_bound_trial: a values must be > 0");
  if (N < 1 || n < 1) throw std::invalid_argument("markov_bound_trial: N and n must be >= 1");

  const IntegrationGrid grid = make_tensor_grid(synthetic_domain(2, half_width),
                                                kDefaultPointsPerAxis);
  const auto ut = static_cast<std::size_t>(trials);
  std::vector<double> div(ut, std::numeric_limits<double>::quiet_NaN());
  parallel_for(ut, [&](std::size_t t) {
    const Quadrature quad(make_basis(2, m, derive_seed(seed, {t, 1})), grid);
    const LambdaMatrix truth =
        synth_lowrank_lambda(m, N, std::min(m, N), derive_seed(seed, {t, 2}));
    const auto stats = sample_bags(truth, quad, n, derive_seed(seed, {t, 3}));
    try {
      const LambdaMatrix hat = fit_mde(stats, quad);
      const auto p_hat = densities_of(hat, quad);
      const auto p_true = densities_of(truth, quad);
      double sum = 0.0;
      for (std::size_t i = 0; i < p_hat.size(); ++i) sum += stats[i].n * kl(p_hat[i], p_true[i]);
      div[t] = sum;
    } catch (const ConvergenceError&) {
    }
  });

  MarkovTrialResult out;
  out.a_values = a_values;
  out.divergences = div;
  for (double v : div)
    if (std::isnan(v)) ++out.failed_trials;
  for (double a : a_values) {
    const double eps = epsilon_bound(N, m, a);
    int hits = 0;
    for (double v : div)
      if (!std::isnan(v) && v >= eps) ++hits;
    // Failed fits count as exceedances so they can only make the check harder.
    out.exceedance.push_back(static_cast<double>(hits + out.failed_trials) /
                             static_cast<double>(trials));
  }
  return out;
}

std::vector<BenchmarkRow> runtime_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.n_stats < 1 || cfg.n_kl < 1 || cfg.n_hausdorff < 1 || cfg.kl_bags < 2 ||
      cfg.repeats < 1)
    throw std::invalid_argument("runtime_benchmark: sizes must be positive");
  const BasisSpec basis = make_basis(cfg.d, cfg.m, derive_seed(cfg.seed, {1}));
  std::mt19937_64 rng(derive_seed(cfg.seed, {2}));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](int n) {
    Mat x(n, cfg.d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    return x;
  };
  std::vector<BenchmarkRow> rows;

  {
    const Mat small = gaussian(cfg.n_stats);
    const Mat large = gaussian(2 * cfg.n_stats);
    BenchmarkRow row{"suff_stats", cfg.n_stats, 2 * cfg.n_stats, 0.0, 0.0};
    double sink = 0.0;
    row.seconds_small =
        min_time(cfg.repeats, [&] { sink += suff_stats(small, basis, "b").phi_bar[0]; });
    row.seconds_large =
        min_time(cfg.repeats, [&] { sink += suff_stats(large, basis, "b").phi_bar[0]; });
    rows.push_back(row);
  }

  {
    const Domain dom = synthetic_domain(cfg.d, 3.141592653589793);
    const Quadrature quad(basis, make_default_grid(dom));
    const LambdaMatrix truth =
        synth_lowrank_lambda(cfg.m, cfg.kl_bags, 2, derive_seed(cfg.seed, {3}));
    auto kl_time = [&](int n) {
      const auto stats = sample_bags(truth, quad, n, derive_seed(cfg.seed, {4, static_cast<std::uint64_t>(n)}));
      const auto dens = densities_of(fit_mde(stats, quad), quad);
      double sink = 0.0;
      const double t = min_time(cfg.repeats, [&] {
        for (std::size_t i = 0; i < dens.size(); ++i)
          for (std::size_t j = i + 1; j < dens.size(); ++j) sink += sym_kl(dens[i], dens[j]);
      });
      return t + 0.0 * sink;
    };
    BenchmarkRow row{"kl_matrix", cfg.n_kl, 2 * cfg.n_kl, kl_time(cfg.n_kl),
                     kl_time(2 * cfg.n_kl)};
    rows.push_back(row);
  }

  {
    const Mat a1 = gaussian(cfg.n_hausdorff), b1 = gaussian(cfg.n_hausdorff);
    const Mat a2 = gaussian(2 * cfg.n_hausdorff), b2 = gaussian(2 * cfg.n_hausdorff);
    double sink = 0.0;
    BenchmarkRow row{"avg_hausdorff", cfg.n_hausdorff, 2 * cfg.n_hausdorff, 0.0, 0.0};
    row.seconds_small = min_time(cfg.repeats, [&] { sink += avg_hausdorff(a1, b1); });
    row.seconds_large = min_time(cfg.repeats, [&] { sink += avg_hausdorff(a2, b2); });
    rows.push_back(row);
  }
  return rows;
}

}  // namespace maxentmil
