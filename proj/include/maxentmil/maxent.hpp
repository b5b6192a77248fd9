#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maxentmil/basis.hpp"

namespace maxentmil {

/// Per-bag summary; the only view of raw instances the solvers ever get.
struct SufficientStats {
  std::string bag_id;
  int n = 0;
  Vec phi_bar;  // empirical mean of the basis over the bag
};

/// A fitted exponential-family density exp(lambda.phi(x) - logZ).
struct MEDensity {
  std::string bag_id;
  Vec lambda;
  double logZ = 0.0;
  Vec mean_phi;
  std::uint64_t basis_seed = 0;
};

struct NewtonConfig {
  int max_iters = 50;
  double grad_tol = 1e-8;
  double armijo_c = 1e-4;
  double backtrack_rho = 0.5;
  double hessian_ridge = 1e-8;

  void validate() const;
};

/// Feature table of a basis on an integration grid. Every integral over the
/// domain is a weighted sum over its rows, so it is built once and shared.
class Quadrature {
 public:
  Quadrature(BasisSpec basis, IntegrationGrid grid);
  /// Arbitrary features on a grid (Q x m); used for non-trigonometric
  /// test families. basis() is left empty.
  Quadrature(IntegrationGrid grid, Mat features, std::uint64_t tag = 0);

  const BasisSpec& basis() const { return basis_; }
  const IntegrationGrid& grid() const { return grid_; }
  const Mat& features() const { return features_; }  // Q x m
  const Vec& log_weights() const { return log_weights_; }
  int m() const { return static_cast<int>(features_.cols()); }
  std::uint64_t tag() const { return tag_; }

  /// Column-wise log-partition and moment means for a parameter matrix
  /// (m x N). Returns logZ (N) and writes means (m x N) when requested.
  Vec log_partition_batch(const Mat& lambdas, Mat* means = nullptr) const;

 private:
  BasisSpec basis_;
  IntegrationGrid grid_;
  Mat features_;
  Vec log_weights_;
  std::uint64_t tag_ = 0;
};

SufficientStats suff_stats(const Mat& bag, const BasisSpec& spec, std::string bag_id);

double log_partition(const Vec& lambda, const Quadrature& quad);

struct Moments {
  Vec mean;
  Mat cov;
};

Moments density_moments(const Vec& lambda, const Quadrature& quad);

/// n * (Z(lambda) - lambda . phi_bar)
double sde_objective(const Vec& lambda, const SufficientStats& stats, const Quadrature& quad);

struct GradHess {
  Vec grad;
  Mat hess;
};

/// Gradient n(E_lambda[phi] - phi_bar) and Hessian n Cov_lambda[phi].
GradHess sde_grad_hess(const Vec& lambda, const SufficientStats& stats,
                       const Quadrature& quad);

/// Builds a density with cached logZ and mean_phi for the given parameters.
MEDensity make_density(const Vec& lambda, const Quadrature& quad, std::string bag_id = {});

/// Damped Newton from lambda = 0 with Armijo backtracking. Throws
/// ConvergenceError if ||grad||_inf > grad_tol after max_iters.
MEDensity fit_sde(const SufficientStats& stats, const Quadrature& quad,
                  const NewtonConfig& cfg = {},
                  std::vector<double>* objective_trace = nullptr);

double kl(const MEDensity& p, const MEDensity& q);
double sym_kl(const MEDensity& p, const MEDensity& q);

struct LogDensity {
  double value = 0.0;
  bool in_domain = true;
};

LogDensity log_density(const MEDensity& p, const Quadrature& quad,
                       const Eigen::Ref<const Vec>& x);
/// Same, with the feature vector already evaluated.
double log_density_from_features(const MEDensity& p, const Eigen::Ref<const Vec>& phi_x);

double hoeffding_delta_bound(int n, int m, double eta);

}  // namespace maxentmil
