#include "maxentmil/maxent.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "maxentmil/error.hpp"

namespace maxentmil {
namespace {

void require_finite(const Vec& lambda, const char* where) {
  if (!lambda.allFinite())
    throw std::invalid_argument(std::string(where) + ": lambda has non-finite entries");
}

void require_dim(const Vec& lambda, const Quadrature& quad, const char* where) {
  if (lambda.size() != quad.m())
    throw std::invalid_argument(std::string(where) + ": lambda has " +
                                std::to_string(lambda.size()) + " entries, basis has " +
                                std::to_string(quad.m()));
}

void require_stats(const SufficientStats& stats, const Quadrature& quad, const char* where) {
  if (stats.phi_bar.size() != quad.m())
    throw std::invalid_argument(std::string(where) + ": stats of bag '" + stats.bag_id +
                                "' have m=" + std::to_string(stats.phi_bar.size()) +
                                ", basis has m=" + std::to_string(quad.m()));
  if (stats.n < 1)
    throw std::invalid_argument(std::string(where) + ": bag '" + stats.bag_id +
                                "' has no instances");
}

// Log-sum-exp of (features * lambda + log w); also returns the normalized
// node weights pi_q when requested.
double logsumexp_nodes(const Vec& lambda, const Quadrature& quad, Vec* pi) {
  Vec s = quad.features() * lambda + quad.log_weights();
  const double smax = s.maxCoeff();
  Vec e = (s.array() - smax).exp();
  const double total = e.sum();
  const double logz = smax + std::log(total);
  if (pi) *pi = e / total;
  return logz;
}

}  // namespace

void NewtonConfig::validate() const {
  if (max_iters < 1 || !(grad_tol > 0) || !(armijo_c > 0) || !(hessian_ridge > 0) ||
      !(backtrack_rho > 0 && backtrack_rho < 1))
    throw std::invalid_argument("NewtonConfig: parameters must be positive, rho in (0,1)");
}

Quadrature::Quadrature(BasisSpec basis, IntegrationGrid grid)
    : basis_(std::move(basis)), grid_(std::move(grid)), tag_(basis_.seed) {
  if (grid_.nodes.cols() != basis_.d)
    throw std::invalid_argument("Quadrature: grid dimension does not match basis");
  features_ = eval_basis_rows(basis_, grid_.nodes);
  log_weights_ = grid_.weights.array().log();
}

Quadrature::Quadrature(IntegrationGrid grid, Mat features, std::uint64_t tag)
    : grid_(std::move(grid)), features_(std::move(features)), tag_(tag) {
  if (features_.rows() != grid_.size())
    throw std::invalid_argument("Quadrature: feature rows must match grid nodes");
  basis_.m = static_cast<int>(features_.cols());
  basis_.seed = tag;
  log_weights_ = grid_.weights.array().log();
}

Vec Quadrature::log_partition_batch(const Mat& lambdas, Mat* means) const {
  if (lambdas.rows() != m())
    throw std::invalid_argument("log_partition_batch: parameter rows must equal m");
  Mat s = features_ * lambdas;
  s.colwise() += log_weights_;
  const Eigen::RowVectorXd smax = s.colwise().maxCoeff();
  s.rowwise() -= smax;
  s = s.array().exp();
  const Eigen::RowVectorXd total = s.colwise().sum();
  Vec logz(lambdas.cols());
  for (Eigen::Index i = 0; i < lambdas.cols(); ++i) logz[i] = smax[i] + std::log(total[i]);
  if (means) {
    s.array().rowwise() /= total.array();
    *means = features_.transpose() * s;
  }
  return logz;
}

SufficientStats suff_stats(const Mat& bag, const BasisSpec& spec, std::string bag_id) {
  if (bag.rows() < 1)
    throw std::invalid_argument("suff_stats: bag '" + bag_id + "' is empty");
  if (bag.cols() != spec.d)
    throw std::invalid_argument("suff_stats: bag '" + bag_id + "' has dimension " +
                                std::to_string(bag.cols()) + ", basis expects " +
                                std::to_string(spec.d));
  SufficientStats out;
  out.bag_id = std::move(bag_id);
  out.n = static_cast<int>(bag.rows());
  out.phi_bar = eval_basis_rows(spec, bag).colwise().mean().transpose();
  return out;
}

double log_partition(const Vec& lambda, const Quadrature& quad) {
  require_dim(lambda, quad, "log_partition");
  require_finite(lambda, "log_partition");
  return logsumexp_nodes(lambda, quad, nullptr);
}

namespace {

// Centered before the product; E[phi phi'] - mu mu' cancels badly for
// nearly constant features.
Mat weighted_covariance(const Mat& features, const Vec& pi, const Vec& mean) {
  const Mat scaled =
      (features.rowwise() - mean.transpose()).array().colwise() * pi.array().sqrt();
  return scaled.transpose() * scaled;
}

}  // namespace

Moments density_moments(const Vec& lambda, const Quadrature& quad) {
  require_dim(lambda, quad, "density_moments");
  require_finite(lambda, "density_moments");
  Vec pi;
  logsumexp_nodes(lambda, quad, &pi);
  Moments out;
  out.mean = quad.features().transpose() * pi;
  out.cov = weighted_covariance(quad.features(), pi, out.mean);
  return out;
}

double sde_objective(const Vec& lambda, const SufficientStats& stats, const Quadrature& quad) {
  require_stats(stats, quad, "sde_objective");
  return stats.n * (log_partition(lambda, quad) - lambda.dot(stats.phi_bar));
}

GradHess sde_grad_hess(const Vec& lambda, const SufficientStats& stats,
                       const Quadrature& quad) {
  require_stats(stats, quad, "sde_grad_hess");
  Moments mom = density_moments(lambda, quad);
  GradHess out;
  out.grad = stats.n * (mom.mean - stats.phi_bar);
  out.hess = stats.n * mom.cov;
  return out;
}

MEDensity make_density(const Vec& lambda, const Quadrature& quad, std::string bag_id) {
  require_dim(lambda, quad, "make_density");
  require_finite(lambda, "make_density");
  Vec pi;
  MEDensity out;
  out.bag_id = std::move(bag_id);
  out.lambda = lambda;
  out.logZ = logsumexp_nodes(lambda, quad, &pi);
  out.mean_phi = quad.features().transpose() * pi;
  out.basis_seed = quad.tag();
  return out;
}

MEDensity fit_sde(const SufficientStats& stats, const Quadrature& quad,
                  const NewtonConfig& cfg, std::vector<double>* objective_trace) {
  cfg.validate();
  require_stats(stats, quad, "fit_sde");
  const int m = quad.m();
  const double n = stats.n;
  constexpr double kEps = std::numeric_limits<double>::epsilon();

  Vec lambda = Vec::Zero(m);
  Vec pi;
  double logz = logsumexp_nodes(lambda, quad, &pi);
  double f = n * (logz - lambda.dot(stats.phi_bar));
  if (objective_trace) objective_trace->assign(1, f);

  double gnorm = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= cfg.max_iters; ++it) {
    const Vec mean = quad.features().transpose() * pi;
    const Vec grad = n * (mean - stats.phi_bar);
    gnorm = grad.lpNorm<Eigen::Infinity>();
    if (gnorm <= cfg.grad_tol) {
      MEDensity out;
      out.bag_id = stats.bag_id;
      out.lambda = lambda;
      out.logZ = logz;
      out.mean_phi = mean;
      out.basis_seed = quad.tag();
      return out;
    }
    if (it == cfg.max_iters) break;

    Mat hess = n * weighted_covariance(quad.features(), pi, mean);
    hess.diagonal().array() += cfg.hessian_ridge;
    const Vec dir = -hess.ldlt().solve(grad);
    const double slope = grad.dot(dir);

    // Rounding floor of f: it is the difference of two terms of size
    // n (|logZ| + |lambda| . |phi_bar|).
    const double slack =
        64.0 * kEps * n *
        (std::abs(logz) + lambda.cwiseAbs().dot(stats.phi_bar.cwiseAbs()) + 1.0);
    bool accepted = false;
    if (-slope <= slack) {
      // The objective can no longer rank candidates; take the full Newton
      // step when it lowers the gradient.
      const Vec cand = lambda + dir;
      Vec pi_c;
      const double logz_c = logsumexp_nodes(cand, quad, &pi_c);
      const Vec mean_c = quad.features().transpose() * pi_c;
      if (std::isfinite(logz_c) &&
          (n * (mean_c - stats.phi_bar)).lpNorm<Eigen::Infinity>() < gnorm) {
        lambda = cand;
        pi = std::move(pi_c);
        logz = logz_c;
        f = std::min(f, n * (logz_c - cand.dot(stats.phi_bar)));
        accepted = true;
      }
    } else {
      for (double t = 1.0; t > 1e-12; t *= cfg.backtrack_rho) {
        const Vec cand = lambda + t * dir;
        Vec pi_c;
        const double logz_c = logsumexp_nodes(cand, quad, &pi_c);
        const double f_c = n * (logz_c - cand.dot(stats.phi_bar));
        if (std::isfinite(f_c) && f_c <= f + cfg.armijo_c * t * slope + slack) {
          lambda = cand;
          pi = std::move(pi_c);
          logz = logz_c;
          f = std::min(f, f_c);
          accepted = true;
          break;
        }
      }
    }
    if (objective_trace) objective_trace->push_back(f);
    if (!accepted) break;
  }
  std::ostringstream msg;
  msg << "fit_sde: bag '" << stats.bag_id << "' did not converge in " << cfg.max_iters
      << " Newton iterations (|grad|_inf = " << gnorm << ")";
  throw ConvergenceError(msg.str(), gnorm, {stats.bag_id});
}

namespace {
void require_same_basis(const MEDensity& p, const MEDensity& q, const char* where) {
  if (p.lambda.size() != q.lambda.size() || p.basis_seed != q.basis_seed ||
      p.mean_phi.size() != p.lambda.size() || q.mean_phi.size() != q.lambda.size())
    throw std::invalid_argument(std::string(where) + ": densities '" + p.bag_id + "' and '" +
                                q.bag_id + "' do not share a basis");
}
}  // namespace

double kl(const MEDensity& p, const MEDensity& q) {
  require_same_basis(p, q, "kl");
  return (p.lambda - q.lambda).dot(p.mean_phi) - (p.logZ - q.logZ);
}

double sym_kl(const MEDensity& p, const MEDensity& q) {
  require_same_basis(p, q, "sym_kl");
  // Written so that swapping arguments gives a bit-identical result.
  const Vec dl = p.lambda - q.lambda;
  const Vec dm = p.mean_phi - q.mean_phi;
  return dl.cwiseProduct(dm).sum();
}

double log_density_from_features(const MEDensity& p, const Eigen::Ref<const Vec>& phi_x) {
  if (phi_x.size() != p.lambda.size())
    throw std::invalid_argument("log_density: feature vector size mismatch");
  return p.lambda.dot(phi_x) - p.logZ;
}

LogDensity log_density(const MEDensity& p, const Quadrature& quad,
                       const Eigen::Ref<const Vec>& x) {
  LogDensity out;
  out.value = log_density_from_features(p, eval_basis(quad.basis(), x));
  out.in_domain = quad.grid().domain.contains(x);
  return out;
}

double hoeffding_delta_bound(int n, int m, double eta) {
  if (n < 1 || m < 1 || !(eta > 0.0 && eta < 1.0))
    throw std::invalid_argument("hoeffding_delta_bound: need n >= 1, m >= 1, 0 < eta < 1");
  return std::sqrt(2.0 * std::log(2.0 * m / eta)) / std::sqrt(static_cast<double>(n));
}

}  // namespace maxentmil
