#include "maxentmil/basis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "maxentmil/error.hpp"

namespace maxentmil {

Domain::Domain(Vec lo, Vec hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() == 0 || lo_.size() != hi_.size())
    throw std::invalid_argument("Domain: lo/hi must be non-empty and equal length");
  for (Eigen::Index j = 0; j < lo_.size(); ++j) {
    if (!std::isfinite(lo_[j]) || !std::isfinite(hi_[j]) || !(lo_[j] < hi_[j]))
      throw std::invalid_argument("Domain: axis " + std::to_string(j) +
                                  " requires finite lo < hi");
  }
  if (!(volume() > 0.0) || !std::isfinite(volume()))
    throw std::invalid_argument("Domain: volume must be finite and positive");
}

double Domain::volume() const { return (hi_ - lo_).prod(); }

bool Domain::contains(const Eigen::Ref<const Vec>& x) const {
  if (x.size() != lo_.size()) return false;
  return (x.array() >= lo_.array()).all() && (x.array() <= hi_.array()).all();
}

BasisSpec make_basis(int d, int m, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("make_basis: d must be >= 1");
  if (m < 2 || m % 2 != 0)
    throw std::invalid_argument("make_basis: m must be even and >= 2, got " +
                                std::to_string(m));
  BasisSpec spec;
  spec.d = d;
  spec.m = m;
  spec.seed = seed;
  spec.freqs.resize(m / 2, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // row-major fill so the draw order matches the serialized layout
  for (int k = 0; k < m / 2; ++k)
    for (int j = 0; j < d; ++j) spec.freqs(k, j) = normal(rng);
  return spec;
}

Vec eval_basis(const BasisSpec& spec, const Eigen::Ref<const Vec>& x) {
  if (x.size() != spec.d)
    throw std::invalid_argument("eval_basis: expected dimension " +
                                std::to_string(spec.d) + ", got " +
                                std::to_string(x.size()));
  Vec out(spec.m);
  for (int k = 0; k < spec.pairs(); ++k) {
    const double t = spec.freqs.row(k).dot(x);
    out[2 * k] = std::sin(t);
    out[2 * k + 1] = std::cos(t);
  }
  return out;
}

Mat eval_basis_rows(const BasisSpec& spec, const Mat& x) {
  if (x.cols() != spec.d)
    throw std::invalid_argument("eval_basis_rows: expected " + std::to_string(spec.d) +
                                " columns, got " + std::to_string(x.cols()));
  const Mat phase = x * spec.freqs.transpose();  // n x pairs
  Mat out(x.rows(), spec.m);
  for (int k = 0; k < spec.pairs(); ++k) {
    out.col(2 * k) = phase.col(k).array().sin();
    out.col(2 * k + 1) = phase.col(k).array().cos();
  }
  return out;
}

IntegrationGrid make_tensor_grid(const Domain& domain, int points_per_axis,
                                 std::size_t max_nodes) {
  if (points_per_axis < 2)
    throw std::invalid_argument("make_tensor_grid: points_per_axis must be >= 2");
  const int d = domain.dim();
  std::size_t q = 1;
  for (int j = 0; j < d; ++j) {
    q *= static_cast<std::size_t>(points_per_axis);
    if (q > max_nodes)
      throw ResourceError("make_tensor_grid: " + std::to_string(points_per_axis) + "^" +
                          std::to_string(d) + " nodes exceeds the limit of " +
                          std::to_string(max_nodes));
  }
  IntegrationGrid grid;
  grid.kind = GridKind::tensor;
  grid.domain = domain;
  grid.points_per_axis = points_per_axis;
  const auto nq = static_cast<Eigen::Index>(q);
  grid.nodes.resize(nq, d);
  grid.weights = Vec::Constant(nq, domain.volume() / static_cast<double>(q));

  const Vec step = (domain.hi() - domain.lo()) / points_per_axis;
  std::vector<int> idx(d, 0);
  for (Eigen::Index r = 0; r < nq; ++r) {
    for (int j = 0; j < d; ++j)
      grid.nodes(r, j) = domain.lo()[j] + (idx[j] + 0.5) * step[j];
    // odometer: last axis fastest
    for (int j = d - 1; j >= 0; --j) {
      if (++idx[j] < points_per_axis) break;
      idx[j] = 0;
    }
  }
  return grid;
}

IntegrationGrid make_mc_grid(const Domain& domain, int nodes, std::uint64_t seed) {
  if (nodes < 1) throw std::invalid_argument("make_mc_grid: Q must be >= 1");
  IntegrationGrid grid;
  grid.kind = GridKind::monte_carlo;
  grid.domain = domain;
  grid.seed = seed;
  const int d = domain.dim();
  grid.nodes.resize(nodes, d);
  grid.weights = Vec::Constant(nodes, domain.volume() / nodes);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int r = 0; r < nodes; ++r)
    for (int j = 0; j < d; ++j)
      grid.nodes(r, j) = domain.lo()[j] + unif(rng) * (domain.hi()[j] - domain.lo()[j]);
  return grid;
}

IntegrationGrid make_default_grid(const Domain& domain) {
  if (domain.dim() <= 3) return make_tensor_grid(domain, kDefaultPointsPerAxis);
  return make_mc_grid(domain, kDefaultMonteCarloNodes, kDefaultMonteCarloSeed);
}

Domain domain_from_data(const Mat& instances, double margin) {
  if (instances.rows() == 0 || instances.cols() == 0)
    throw std::invalid_argument("domain_from_data: empty input");
  if (!(margin >= 0.0)) throw std::invalid_argument("domain_from_data: margin must be >= 0");
  Vec lo = instances.colwise().minCoeff().transpose();
  Vec hi = instances.colwise().maxCoeff().transpose();
  for (Eigen::Index j = 0; j < lo.size(); ++j) {
    const double width = hi[j] - lo[j];
    const double pad = width > 0.0 ? margin * width : std::max(margin, 1e-6);
    lo[j] -= pad;
    hi[j] += pad;
  }
  return Domain(std::move(lo), std::move(hi));
}

}  // namespace maxentmil
