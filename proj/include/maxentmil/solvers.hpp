#pragma once

#include <limits>
#include <string>
#include <vector>

#include "maxentmil/lowrank.hpp"
#include "maxentmil/maxent.hpp"

namespace maxentmil {

/// Joint parameter matrix; column i is lambda_i of bag_ids[i].
struct LambdaMatrix {
  Mat data;  // m x N
  std::vector<std::string> bag_ids;

  Eigen::Index m() const { return data.rows(); }
  Eigen::Index bags() const { return data.cols(); }
  void validate() const;
};

struct CmenaConfig {
  double a = 1.0;          // confidence multiplier in eps = a N m / 2
  int max_outer = 30;      // dual bisection steps
  int max_inner = 100;     // accelerated proximal steps per dual value
  double obj_tol = 1e-2;   // relative decrease of the Lagrangian between inner steps
  double inner_precision = 1e-2;  // inner steps also continue while the decrease exceeds this * z * cons_tol
  double cons_tol = 1e-1;  // |g - eps| target for the dual search
  double ls_alpha = 0.7;
  double tau_floor = 1e-3;
  double z_lo = 0.0;
  double z_hi_init = 1.0;
  bool warm_start = true;  // start each dual value from the previous solution

  void validate() const;
};

struct RmdeConfig {
  int max_iters = 500;
  double tol = 1e-4;  // prox-stationarity residual, Frobenius
  double ls_alpha = 0.7;
  double tau_floor = 1e-3;

  void validate() const;
};

struct FitReport {
  std::string solver;
  // One entry per outer iterate (dual value for cmen, eta stage for rmde).
  std::vector<double> objective_trace;   // nuclear norm
  std::vector<double> constraint_trace;  // g - eps (rmde: g)
  std::vector<int> rank_trace;
  std::vector<double> z_trace;  // rmde reports 1/eta
  std::vector<double> eta_trace;  // continuation only
  int inner_iters = 0;
  int outer_iters = 0;
  long accepted_steps = 0;
  long majorization_violations = 0;
  long momentum_restarts = 0;
  double epsilon = 0.0;
  double g_final = 0.0;
  double tau_lipschitz = 0.0;
  double tau_paper = 0.0;  // N m, the unweighted constant
  double stationarity = 0.0;
  bool warning = false;
  std::string warning_message;
  double wall_time = 0.0;
};

struct SolverResult {
  LambdaMatrix lambda;
  FitReport report;
};

/// Smooth part of a composite objective. evaluate() returns the value and
/// writes the gradient when `grad` is non-null.
class SmoothObjective {
 public:
  virtual ~SmoothObjective() = default;
  virtual double evaluate(const Mat& x, Mat* grad) const = 0;
  /// Magnitude used to size the rounding allowance of majorization checks.
  virtual double rounding_scale() const { return 1.0; }
};

/// F(L) = sum_i n_i (Z(lambda_i) - lambda_i . phi_bar_i), the joint negative
/// log-likelihood up to a constant.
class MultiBagLikelihood : public SmoothObjective {
 public:
  MultiBagLikelihood(const Quadrature& quad, std::vector<SufficientStats> stats);
  double evaluate(const Mat& x, Mat* grad) const override;
  double rounding_scale() const override { return scale_; }

  const Quadrature& quadrature() const { return *quad_; }
  const std::vector<SufficientStats>& stats() const { return stats_; }
  Eigen::Index bags() const { return static_cast<Eigen::Index>(stats_.size()); }
  int max_count() const;

 protected:
  const Quadrature* quad_;
  std::vector<SufficientStats> stats_;
  Mat phi_bar_;  // m x N
  Vec counts_;   // N
  double scale_ = 1.0;
};

/// g(L) = F(L) - F(L_hat) = sum_i n_i D(p_hat_i || p_i) for a moment-matched
/// ML estimate L_hat.
class ConfidenceGap : public MultiBagLikelihood {
 public:
  ConfidenceGap(const Quadrature& quad, std::vector<SufficientStats> stats,
                const LambdaMatrix& lambda_hat);
  double evaluate(const Mat& x, Mat* grad) const override;
  const LambdaMatrix& lambda_hat() const { return lambda_hat_; }

 private:
  LambdaMatrix lambda_hat_;
  double f_hat_ = 0.0;
};

/// Column-wise fit_sde. Failures are aggregated into one ConvergenceError.
LambdaMatrix fit_mde(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                     const NewtonConfig& cfg = {});

/// Densities (logZ, mean_phi cached) for every column of a parameter matrix.
std::vector<MEDensity> densities_of(const LambdaMatrix& lambda, const Quadrature& quad);

struct GValue {
  double g = 0.0;
  Mat grad;
};

GValue g_and_grad(const LambdaMatrix& lambda, const LambdaMatrix& lambda_hat,
                  const std::vector<SufficientStats>& stats, const Quadrature& quad);

double epsilon_bound(int bags, int m, double a);

/// m * max_i n_i: bound on the largest eigenvalue of the block-diagonal
/// Hessian n_i Cov_i of g.
double lipschitz_tau(const std::vector<SufficientStats>& stats, int m);

/// soft_threshold(L0 - grad / tau, 1 / (tau z))
Mat prox_step(const Mat& lambda0, double z, double tau, const Mat& grad);

struct LineSearchResult {
  double tau = 0.0;
  Mat candidate;
  double g_candidate = 0.0;
  double g_bar = 0.0;
  double candidate_nuclear = 0.0;
  int candidate_rank = 0;
  int trials = 0;
  bool majorized = false;
};

/// Shrinks tau by cfg.ls_alpha from tau_start while the prox candidate at the
/// smaller tau still satisfies g(L+) <= g(Lbar) + <L+ - Lbar, grad> +
/// tau/2 ||L+ - Lbar||^2, never below tau_floor * tau_start. If the candidate
/// at tau_start itself violates the bound, tau grows by 1/alpha up to tau_max.
LineSearchResult line_search(const SmoothObjective& g, const Mat& lambda_bar, double z,
                             double tau_start, const CmenaConfig& cfg,
                             double tau_max = std::numeric_limits<double>::infinity());

/// Confidence-constrained nuclear-norm minimization (CMENA).
SolverResult fit_cmen(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                      const LambdaMatrix& lambda_hat, const CmenaConfig& cfg = {});
SolverResult fit_cmen(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                      const CmenaConfig& cfg = {}, const NewtonConfig& newton = {});

/// Nuclear-norm regularized MDE at fixed eta by monotone proximal gradient
/// starting from `start` (lambda_hat when empty).
SolverResult fit_rmde(const std::vector<SufficientStats>& stats, const Quadrature& quad,
                      double eta, const LambdaMatrix& lambda_hat, const RmdeConfig& cfg = {},
                      const Mat* start = nullptr);

/// eta^0 = ||L_hat||_F^2, eta^k = max(eta^{k-1} / 10, 1e-3 eta^0), warm started.
SolverResult rmde_continuation(const std::vector<SufficientStats>& stats,
                               const Quadrature& quad, const LambdaMatrix& lambda_hat,
                               const RmdeConfig& cfg = {});

/// The eta ladder used by rmde_continuation.
std::vector<double> continuation_schedule(double eta0, double factor = 0.1,
                                          double floor_ratio = 1e-3);

struct CrossValidationResult {
  double best_eta = 0.0;
  std::vector<double> test_errors;  // aligned with the eta list
  int fits = 0;
  SolverResult refit;
};

/// 70/30 split over bags; held-out bag j is scored by
/// min over trained columns of n_j (Z(lambda) - lambda . phi_bar_j).
CrossValidationResult rmde_cross_validate(const std::vector<SufficientStats>& stats,
                                          const Quadrature& quad,
                                          const std::vector<double>& etas,
                                          std::uint64_t split_seed,
                                          const RmdeConfig& cfg = {},
                                          const NewtonConfig& newton = {});

std::vector<double> default_eta_grid();

/// Reduced basis psi_j(x) = u_j . phi(x) and per-bag coefficients
/// beta(j, i) = s_j v_j(i) from the SVD of a fitted parameter matrix.
struct PsiBasis {
  Mat directions;  // m x k, columns u_j
  Vec singular_values;
  Mat beta;  // k x N

  Eigen::Index k() const { return directions.cols(); }
  Vec psi(const Eigen::Ref<const Vec>& phi_x) const { return directions.transpose() * phi_x; }
};

PsiBasis psi_basis(const LambdaMatrix& lambda_star, int k);

}  // namespace maxentmil
