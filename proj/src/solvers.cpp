#include "maxentmil/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "maxentmil/error.hpp"
#include "maxentmil/parallel.hpp"

namespace maxentmil {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Shrunk {
  Mat x;
  double nuclear = 0.0;
  int rank = 0;
};

// U (S - alpha)_+ V^T together with its nuclear norm and rank.
Shrunk shrink(const Mat& y, double alpha) {
  Shrunk out;
  if (!std::isfinite(alpha)) {
    out.x = Mat::Zero(y.rows(), y.cols());
    return out;
  }
  const SvdFactors f = svd(y);
  Eigen::Index r = 0;
  while (r < f.S.size() && f.S[r] > alpha) ++r;
  if (r == 0) {
    out.x = Mat::Zero(y.rows(), y.cols());
    return out;
  }
  const Vec s = f.S.head(r).array() - alpha;
  out.x = f.U.leftCols(r) * s.asDiagonal() * f.V.leftCols(r).transpose();
  out.nuclear = s.sum();
  out.rank = static_cast<int>(r);
  return out;
}

int support_rank(const Mat& x) {
  if (x.size() == 0) return 0;
  const Vec s = Eigen::BDCSVD<Mat>(x).singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  return static_cast<int>((s.array() > 1e-9 * std::max(1.0, s[0])).count());
}

void require_aligned(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                     const char* where) {
  if (stats.empty()) throw std::invalid_argument(std::string(where) + ": no bags");
  for (const auto& s : stats) {
    if (s.phi_bar.size() != quad.m())
      throw std::invalid_argument(std::string(where) + ": bag '" + s.bag_id +
                                  "' has mismatched basis size");
    if (s.n < 1)
      throw std::invalid_argument(std::string(where) + ": bag '" + s.bag_id + "' is empty");
  }
}

std::vector<std::string> ids_of(const std::vector<SufficientStats>& stats) {
  std::vector<std::string> ids;
  ids.reserve(stats.size());
  for (const auto& s : stats) ids.push_back(s.bag_id);
  return ids;
}

}  // namespace

void LambdaMatrix::validate() const {
  if (!data.allFinite()) throw std::invalid_argument("LambdaMatrix: non-finite entries");
  if (static_cast<std::size_t>(data.cols()) != bag_ids.size())
    throw std::invalid_argument("LambdaMatrix: column count does not match bag ids");
}

void CmenaConfig::validate() const {
  if (!(a > 0) || max_outer < 1 || max_inner < 1 || !(obj_tol > 0) || !(cons_tol > 0) ||
      !(ls_alpha > 0 && ls_alpha < 1) || !(tau_floor > 0 && tau_floor <= 1) || !(z_lo >= 0) ||
      !(z_hi_init > z_lo) || !(inner_precision > 0))
    throw std::invalid_argument(
        "CmenaConfig: need a > 0, positive budgets/tolerances, ls_alpha in (0,1), "
        "tau_floor in (0,1], 0 <= z_lo < z_hi_init");
}

void RmdeConfig::validate() const {
  if (max_iters < 1 || !(tol > 0) || !(ls_alpha > 0 && ls_alpha < 1) ||
      !(tau_floor > 0 && tau_floor <= 1))
    throw std::invalid_argument("RmdeConfig: invalid parameters");
}

// --- objectives ------------------------------------------------------------

MultiBagLikelihood::MultiBagLikelihood(const Quadrature& quad,
                                       std::vector<SufficientStats> stats)
    : quad_(&quad), stats_(std::move(stats)) {
  require_aligned(stats_, quad, "MultiBagLikelihood");
  const auto n = static_cast<Eigen::Index>(stats_.size());
  phi_bar_.resize(quad.m(), n);
  counts_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    phi_bar_.col(i) = stats_[i].phi_bar;
    counts_[i] = stats_[i].n;
  }
  scale_ = counts_.sum() * (1.0 + std::abs(std::log(quad.grid().domain.volume())));
}

int MultiBagLikelihood::max_count() const { return static_cast<int>(counts_.maxCoeff()); }

double MultiBagLikelihood::evaluate(const Mat& x, Mat* grad) const {
  if (x.rows() != phi_bar_.rows() || x.cols() != phi_bar_.cols())
    throw std::invalid_argument("MultiBagLikelihood: parameter shape mismatch");
  Mat means;
  const Vec logz = quad_->log_partition_batch(x, grad ? &means : nullptr);
  const Vec linear = x.cwiseProduct(phi_bar_).colwise().sum().transpose();
  if (grad) *grad = (means - phi_bar_) * counts_.asDiagonal();
  return counts_.dot(logz - linear);
}

ConfidenceGap::ConfidenceGap(const Quadrature& quad, std::vector<SufficientStats> stats,
                             const LambdaMatrix& lambda_hat)
    : MultiBagLikelihood(quad, std::move(stats)), lambda_hat_(lambda_hat) {
  lambda_hat_.validate();
  if (lambda_hat_.data.rows() != phi_bar_.rows() || lambda_hat_.data.cols() != phi_bar_.cols())
    throw std::invalid_argument("ConfidenceGap: lambda_hat shape does not match stats");
  f_hat_ = MultiBagLikelihood::evaluate(lambda_hat_.data, nullptr);
}

double ConfidenceGap::evaluate(const Mat& x, Mat* grad) const {
  return MultiBagLikelihood::evaluate(x, grad) - f_hat_;
}

// --- estimation ------------------------------------------------------------

LambdaMatrix fit_mde(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                     const NewtonConfig& cfg) {
  require_aligned(stats, quad, "fit_mde");
  const auto n = stats.size();
  std::vector<Vec> columns(n);
  std::vector<std::string> errors(n);
  std::vector<double> gnorms(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    try {
      columns[i] = fit_sde(stats[i], quad, cfg).lambda;
    } catch (const ConvergenceError& e) {
      errors[i] = e.what();
      gnorms[i] = e.last_grad_norm();
    }
  });
  std::vector<std::string> failed;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      failed.push_back(stats[i].bag_id);
      worst = std::max(worst, gnorms[i]);
    }
  }
  if (!failed.empty()) {
    std::ostringstream msg;
    msg << "fit_mde: " << failed.size() << " bag(s) failed to converge:";
    for (const auto& id : failed) msg << ' ' << id;
    throw ConvergenceError(msg.str(), worst, failed);
  }
  LambdaMatrix out;
  out.data.resize(quad.m(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.data.col(static_cast<Eigen::Index>(i)) = columns[i];
  out.bag_ids = ids_of(stats);
  return out;
}

std::vector<MEDensity> densities_of(const LambdaMatrix& lambda, const Quadrature& quad) {
  lambda.validate();
  Mat means;
  const Vec logz = quad.log_partition_batch(lambda.data, &means);
  std::vector<MEDensity> out(static_cast<std::size_t>(lambda.bags()));
  for (Eigen::Index i = 0; i < lambda.bags(); ++i) {
    auto& d = out[static_cast<std::size_t>(i)];
    d.bag_id = lambda.bag_ids[static_cast<std::size_t>(i)];
    d.lambda = lambda.data.col(i);
    d.logZ = logz[i];
    d.mean_phi = means.col(i);
    d.basis_seed = quad.tag();
  }
  return out;
}

GValue g_and_grad(const LambdaMatrix& lambda, const LambdaMatrix& lambda_hat,
                  const std::vector<SufficientStats>& stats, const Quadrature& quad) {
  lambda.validate();
  if (lambda.data.rows() != lambda_hat.data.rows() || lambda.data.cols() != lambda_hat.data.cols())
    throw std::invalid_argument("g_and_grad: lambda and lambda_hat shapes differ");
  if (static_cast<Eigen::Index>(stats.size()) != lambda.bags())
    throw std::invalid_argument("g_and_grad: stats count does not match columns");
  const ConfidenceGap gap(quad, stats, lambda_hat);
  GValue out;
  out.g = gap.evaluate(lambda.data, &out.grad);
  return out;
}

double epsilon_bound(int bags, int m, double a) {
  if (bags < 1 || m < 1 || !(a > 0))
    throw std::invalid_argument("epsilon_bound: arguments must be positive");
  return a * bags * m / 2.0;
}

double lipschitz_tau(const std::vector<SufficientStats>& stats, int m) {
  if (stats.empty()) throw std::invalid_argument("lipschitz_tau: no bags");
  int nmax = 0;
  for (const auto& s : stats) nmax = std::max(nmax, s.n);
  return static_cast<double>(m) * nmax;
}

Mat prox_step(const Mat& lambda0, double z, double tau, const Mat& grad) {
  if (!(z > 0) || !(tau > 0)) throw std::invalid_argument("prox_step: z and tau must be > 0");
  if (grad.rows() != lambda0.rows() || grad.cols() != lambda0.cols())
    throw std::invalid_argument("prox_step: gradient shape mismatch");
  return soft_threshold(lambda0 - grad / tau, 1.0 / (tau * z));
}

LineSearchResult line_search(const SmoothObjective& g, const Mat& lambda_bar, double z,
                             double tau_start, const CmenaConfig& cfg, double tau_max) {
  if (!(tau_start > 0)) throw std::invalid_argument("line_search: tau_start must be > 0");
  if (!(z >= 0)) throw std::invalid_argument("line_search: z must be >= 0");
  if (!(cfg.ls_alpha > 0 && cfg.ls_alpha < 1))
    throw std::invalid_argument("line_search: ls_alpha must be in (0,1)");

  Mat grad;
  const double g_bar = g.evaluate(lambda_bar, &grad);
  const double slack = 1e-12 * g.rounding_scale();
  const double weight = z > 0 ? 1.0 / z : std::numeric_limits<double>::infinity();

  LineSearchResult best;
  best.g_bar = g_bar;
  auto trial = [&](double tau, LineSearchResult& out) {
    Shrunk s = shrink(lambda_bar - grad / tau, weight / tau);
    const Mat d = s.x - lambda_bar;
    const double gc = g.evaluate(s.x, nullptr);
    const double bound = g_bar + d.cwiseProduct(grad).sum() + 0.5 * tau * d.squaredNorm();
    out.tau = tau;
    out.g_candidate = gc;
    out.candidate = std::move(s.x);
    out.candidate_nuclear = s.nuclear;
    out.candidate_rank = s.rank;
    out.majorized = std::isfinite(gc) && gc <= bound + slack;
    ++best.trials;
  };

  double tau = tau_start;
  trial(tau, best);
  if (!best.majorized) {
    while (!best.majorized && tau < tau_max) {
      tau = std::min(tau / cfg.ls_alpha, tau_max);
      trial(tau, best);
    }
    return best;
  }
  const double floor = cfg.tau_floor * tau_start;
  LineSearchResult next;
  while (true) {
    const double smaller = tau * cfg.ls_alpha;
    if (smaller < floor) break;
    next.trials = 0;
    trial(smaller, next);
    if (!next.majorized) break;
    const int trials = best.trials;
    best.tau = next.tau;
    best.candidate = std::move(next.candidate);
    best.g_candidate = next.g_candidate;
    best.candidate_nuclear = next.candidate_nuclear;
    best.candidate_rank = next.candidate_rank;
    best.trials = trials;
    tau = smaller;
  }
  return best;
}

// --- CMENA -----------------------------------------------------------------

namespace {

struct InnerSolution {
  Mat x;
  double g = 0.0;
  double nuclear = 0.0;
  int rank = 0;
  int iters = 0;
};

// Accelerated proximal gradient on ||L||_* + z (g(L) - eps).
// When an accelerated step fails to lower the Lagrangian the momentum is
// reset and the step is retaken from the current iterate, so the Lagrangian
// is monotone and its relative decrease is a usable stopping signal.
InnerSolution solve_fixed_dual(const ConfidenceGap& gap, const Mat& start, double z,
                               double eps, double tau_lip, const CmenaConfig& cfg,
                               FitReport& report) {
  Mat x = start;
  Mat x_prev = x;
  double a_prev = 1.0;
  double a = 1.0;
  double tau = tau_lip;
  InnerSolution out;
  out.g = gap.evaluate(x, nullptr);
  out.nuclear = nuclear_norm(x);
  out.rank = support_rank(x);
  double lagr = out.nuclear + z * (out.g - eps);
  for (int k = 1; k <= cfg.max_inner; ++k) {
    const bool accelerated = a_prev > 1.0;
    LineSearchResult ls =
        line_search(gap, accelerated ? Mat(x + ((a_prev - 1.0) / a) * (x - x_prev)) : x, z, tau,
                    cfg, tau_lip);
    double cand = ls.candidate_nuclear + z * (ls.g_candidate - eps);
    if (accelerated && cand > lagr) {
      ++report.momentum_restarts;
      a_prev = a = 1.0;
      ls = line_search(gap, x, z, tau, cfg, tau_lip);
      cand = ls.candidate_nuclear + z * (ls.g_candidate - eps);
    }
    if (!ls.majorized) ++report.majorization_violations;
    ++report.accepted_steps;
    x_prev = std::move(x);
    x = std::move(ls.candidate);
    tau = ls.tau;
    a_prev = a;
    a = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * a * a));
    out.g = ls.g_candidate;
    out.nuclear = ls.candidate_nuclear;
    out.rank = ls.candidate_rank;
    out.iters = k;
    const double decrease = lagr - cand;
    lagr = cand;
    // A decrease of z * delta moves g by about delta, so the second bound keeps
    // the inner precision finer than the constraint tolerance.
    if (decrease <= std::min(cfg.obj_tol * std::max(1.0, std::abs(lagr)),
                             cfg.inner_precision * z * cfg.cons_tol))
      break;
  }
  report.inner_iters += out.iters;
  out.x = std::move(x);
  return out;
}

}  // namespace

SolverResult fit_cmen(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                      const LambdaMatrix& lambda_hat, const CmenaConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  const ConfidenceGap gap(quad, stats, lambda_hat);
  const int n_bags = static_cast<int>(stats.size());
  const int m = quad.m();

  SolverResult result;
  FitReport& rep = result.report;
  rep.solver = "cmen";
  rep.epsilon = epsilon_bound(n_bags, m, cfg.a);
  rep.tau_lipschitz = lipschitz_tau(stats, m);
  rep.tau_paper = static_cast<double>(n_bags) * m;
  result.lambda.bag_ids = lambda_hat.bag_ids;
  const double eps = rep.epsilon;

  auto record = [&](double z, const InnerSolution& s) {
    rep.z_trace.push_back(z);
    rep.objective_trace.push_back(s.nuclear);
    rep.constraint_trace.push_back(s.g - eps);
    rep.rank_trace.push_back(s.rank);
    ++rep.outer_iters;
  };

  if (gap.evaluate(lambda_hat.data, nullptr) > eps)
    throw std::logic_error("fit_cmen: ML estimate violates the confidence constraint");

  const Mat zero = Mat::Zero(m, n_bags);
  const double g_zero = gap.evaluate(zero, nullptr);
  if (g_zero <= eps) {
    result.lambda.data = zero;
    rep.g_final = g_zero;
    InnerSolution s;
    s.x = zero;
    s.g = g_zero;
    record(0.0, s);
    rep.wall_time = seconds_since(t0);
    return result;
  }

  double z_lo = cfg.z_lo;
  double z_hi = cfg.z_hi_init;
  // Every inner solve starts from lambda_hat, or with warm_start from the
  // previous dual value's solution.
  Mat last = lambda_hat.data;
  auto solve = [&](double z) {
    InnerSolution s =
        solve_fixed_dual(gap, cfg.warm_start ? last : lambda_hat.data, z, eps,
                         rep.tau_lipschitz, cfg, rep);
    if (cfg.warm_start) last = s.x;
    record(z, s);
    return s;
  };
  InnerSolution best = solve(z_hi);
  for (int grow = 0; best.g - eps >= 0 && grow < 60; ++grow) {
    z_lo = z_hi;
    z_hi *= 2.0;
    best = solve(z_hi);
  }
  if (best.g - eps >= cfg.cons_tol)
    throw std::logic_error("fit_cmen: could not bracket the dual variable");

  bool converged = std::abs(best.g - eps) < cfg.cons_tol;
  for (int j = 0; j < cfg.max_outer && !converged; ++j) {
    const double z = 0.5 * (z_lo + z_hi);
    InnerSolution s = solve(z);
    if (s.g - eps >= 0) {
      z_lo = z;
      if (s.g - eps < cfg.cons_tol) {
        best = std::move(s);
        converged = true;
      }
    } else {
      z_hi = z;
      best = std::move(s);
      converged = eps - best.g < cfg.cons_tol;
    }
  }
  if (!converged) {
    rep.warning = true;
    rep.warning_message = "dual bisection budget exhausted; returning best feasible iterate";
  }
  result.lambda.data = std::move(best.x);
  rep.g_final = best.g;
  rep.wall_time = seconds_since(t0);
  return result;
}

SolverResult fit_cmen(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                      const CmenaConfig& cfg, const NewtonConfig& newton) {
  return fit_cmen(stats, quad, fit_mde(stats, quad, newton), cfg);
}

// --- RMDE ------------------------------------------------------------------

SolverResult fit_rmde(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                      double eta, const LambdaMatrix& lambda_hat, const RmdeConfig& cfg,
                      const Mat* start) {
  if (!(eta > 0)) throw std::invalid_argument("fit_rmde: eta must be > 0");
  cfg.validate();
  lambda_hat.validate();
  const auto t0 = Clock::now();
  const ConfidenceGap gap(quad, stats, lambda_hat);
  CmenaConfig ls_cfg;
  ls_cfg.ls_alpha = cfg.ls_alpha;
  ls_cfg.tau_floor = cfg.tau_floor;

  SolverResult result;
  FitReport& rep = result.report;
  rep.solver = "rmde";
  rep.tau_lipschitz = lipschitz_tau(stats, quad.m());
  rep.tau_paper = static_cast<double>(stats.size()) * quad.m();
  result.lambda.bag_ids = lambda_hat.bag_ids;

  Mat x = start ? *start : lambda_hat.data;
  if (x.rows() != lambda_hat.data.rows() || x.cols() != lambda_hat.data.cols())
    throw std::invalid_argument("fit_rmde: start shape mismatch");
  // Accelerated steps with the same restart rule as the CMENA inner loop, so
  // F + eta ||L||_* never increases. Stationarity is checked at every iterate.
  double tau = rep.tau_lipschitz;
  double g_x = gap.evaluate(x, nullptr);
  double obj = g_x + eta * nuclear_norm(x);
  Mat x_prev = x;
  double a_prev = 1.0;
  double a = 1.0;
  double resid = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const bool accelerated = a_prev > 1.0;
    LineSearchResult ls =
        line_search(gap, accelerated ? Mat(x + ((a_prev - 1.0) / a) * (x - x_prev)) : x,
                    1.0 / eta, tau, ls_cfg, rep.tau_lipschitz);
    double cand = ls.g_candidate + eta * ls.candidate_nuclear;
    if (accelerated && cand > obj) {
      ++rep.momentum_restarts;
      a_prev = a = 1.0;
      ls = line_search(gap, x, 1.0 / eta, tau, ls_cfg, rep.tau_lipschitz);
      cand = ls.g_candidate + eta * ls.candidate_nuclear;
    }
    if (!ls.majorized) ++rep.majorization_violations;
    ++rep.accepted_steps;
    ++rep.inner_iters;
    x_prev = std::move(x);
    x = std::move(ls.candidate);
    g_x = ls.g_candidate;
    obj = cand;
    tau = ls.tau;
    a_prev = a;
    a = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * a * a));
    Mat grad;
    gap.evaluate(x, &grad);
    resid = (x - shrink(x - grad / tau, eta / tau).x).norm();
    if (resid <= cfg.tol) {
      converged = true;
      break;
    }
  }
  rep.stationarity = resid;
  if (!converged) {
    rep.warning = true;
    rep.warning_message = "iteration budget exhausted before prox-stationarity tolerance";
  }
  rep.g_final = g_x;
  rep.z_trace.push_back(1.0 / eta);
  rep.objective_trace.push_back(nuclear_norm(x));
  rep.constraint_trace.push_back(g_x);
  rep.rank_trace.push_back(support_rank(x));
  rep.outer_iters = 1;
  result.lambda.data = std::move(x);
  rep.wall_time = seconds_since(t0);
  return result;
}

std::vector<double> continuation_schedule(double eta0, double factor, double floor_ratio) {
  if (!(eta0 > 0) || !(factor > 0 && factor < 1) || !(floor_ratio > 0 && floor_ratio <= 1))
    throw std::invalid_argument("continuation_schedule: invalid arguments");
  const double target = floor_ratio * eta0;
  std::vector<double> etas{eta0};
  while (etas.back() > target) {
    double next = std::max(factor * etas.back(), target);
    if (next <= target * (1.0 + 1e-9)) next = target;
    etas.push_back(next);
  }
  return etas;
}

SolverResult rmde_continuation(const std::vector<SufficientStats>& stats,
                               const Quadrature& quad, const LambdaMatrix& lambda_hat,
                               const RmdeConfig& cfg) {
  const auto t0 = Clock::now();
  const double eta0 = lambda_hat.data.squaredNorm();
  if (!(eta0 > 0)) throw std::invalid_argument("rmde_continuation: lambda_hat is zero");
  SolverResult out;
  out.lambda = lambda_hat;
  FitReport& rep = out.report;
  rep.solver = "rmde-continuation";
  const Mat* start = nullptr;
  for (double eta : continuation_schedule(eta0)) {
    SolverResult stage = fit_rmde(stats, quad, eta, lambda_hat, cfg, start);
    const FitReport& sr = stage.report;
    rep.eta_trace.push_back(eta);
    rep.z_trace.push_back(sr.z_trace.back());
    rep.objective_trace.push_back(sr.objective_trace.back());
    rep.constraint_trace.push_back(sr.constraint_trace.back());
    rep.rank_trace.push_back(sr.rank_trace.back());
    rep.inner_iters += sr.inner_iters;
    rep.accepted_steps += sr.accepted_steps;
    rep.majorization_violations += sr.majorization_violations;
    rep.tau_lipschitz = sr.tau_lipschitz;
    rep.tau_paper = sr.tau_paper;
    rep.stationarity = sr.stationarity;
    rep.g_final = sr.g_final;
    if (sr.warning) {
      rep.warning = true;
      rep.warning_message = sr.warning_message;
    }
    ++rep.outer_iters;
    out.lambda = std::move(stage.lambda);
    start = &out.lambda.data;
  }
  rep.wall_time = seconds_since(t0);
  return out;
}

std::vector<double> default_eta_grid() {
  std::vector<double> etas;
  for (int p = -4; p <= 4; ++p) etas.push_back(std::pow(10.0, p));
  return etas;
}

CrossValidationResult rmde_cross_validate(const std::vector<SufficientStats>& stats,
                                          const Quadrature& quad,
                                          const std::vector<double>& etas,
                                          std::uint64_t split_seed, const RmdeConfig& cfg,
                                          const NewtonConfig& newton) {
  if (etas.empty()) throw std::invalid_argument("rmde_cross_validate: empty eta list");
  if (stats.size() < 4)
    throw std::invalid_argument("rmde_cross_validate: need at least 4 bags for a 70/30 split");
  require_aligned(stats, quad, "rmde_cross_validate");

  std::vector<std::size_t> order(stats.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(split_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(stats.size())));
  std::vector<SufficientStats> train, test;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? train : test).push_back(stats[order[i]]);

  const LambdaMatrix hat_train = fit_mde(train, quad, newton);
  CrossValidationResult out;
  out.test_errors.reserve(etas.size());
  for (double eta : etas) {
    const SolverResult fit = fit_rmde(train, quad, eta, hat_train, cfg);
    const Vec logz = quad.log_partition_batch(fit.lambda.data);
    double err = 0.0;
    for (const auto& s : test) {
      const Vec per_col = logz - fit.lambda.data.transpose() * s.phi_bar;
      err += s.n * per_col.minCoeff();
    }
    out.test_errors.push_back(err);
    ++out.fits;
  }
  const auto best = std::min_element(out.test_errors.begin(), out.test_errors.end());
  out.best_eta = etas[static_cast<std::size_t>(best - out.test_errors.begin())];
  const LambdaMatrix hat_all = fit_mde(stats, quad, newton);
  out.refit = fit_rmde(stats, quad, out.best_eta, hat_all, cfg);
  out.refit.report.solver = "rmde-cv";
  return out;
}

PsiBasis psi_basis(const LambdaMatrix& lambda_star, int k) {
  lambda_star.validate();
  const int rank = numeric_rank(lambda_star.data, 1e-8);
  if (k < 1 || k > rank)
    throw std::invalid_argument("psi_basis: k must be in [1, " + std::to_string(rank) + "]");
  const SvdFactors f = svd(lambda_star.data);
  PsiBasis out;
  out.directions = f.U.leftCols(k);
  out.singular_values = f.S.head(k);
  out.beta = out.singular_values.asDiagonal() * f.V.leftCols(k).transpose();
  return out;
}

}  // namespace maxentmil
