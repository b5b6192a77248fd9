#pragma once

#include <cstdint>
#include <cstddef>

#include <Eigen/Dense>

namespace maxentmil {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Axis-aligned box holding every instance.
class Domain {
 public:
  Domain() = default;
  Domain(Vec lo, Vec hi);

  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }
  int dim() const { return static_cast<int>(lo_.size()); }
  double volume() const;
  bool contains(const Eigen::Ref<const Vec>& x) const;

 private:
  Vec lo_;
  Vec hi_;
};

/// Random trigonometric feature map. Row k of `freqs` is the frequency g_k;
/// features are laid out as [sin(g_1.x), cos(g_1.x), sin(g_2.x), ...].
struct BasisSpec {
  int d = 0;
  int m = 0;
  std::uint64_t seed = 0;
  Mat freqs;  // (m/2) x d

  int pairs() const { return m / 2; }
};

BasisSpec make_basis(int d, int m, std::uint64_t seed);

Vec eval_basis(const BasisSpec& spec, const Eigen::Ref<const Vec>& x);

/// Evaluates the basis on every row of `x` (n x d); returns n x m.
Mat eval_basis_rows(const BasisSpec& spec, const Mat& x);

enum class GridKind { tensor, monte_carlo };

struct IntegrationGrid {
  GridKind kind = GridKind::tensor;
  Domain domain;
  Mat nodes;    // Q x d
  Vec weights;  // Q
  int points_per_axis = 0;    // tensor only
  std::uint64_t seed = 0;     // monte-carlo only

  Eigen::Index size() const { return weights.size(); }
};

inline constexpr std::size_t kDefaultGridNodeBudget = std::size_t{1} << 22;
inline constexpr int kDefaultPointsPerAxis = 64;
inline constexpr int kDefaultMonteCarloNodes = 20000;
inline constexpr std::uint64_t kDefaultMonteCarloSeed = 12345;

/// Midpoint tensor grid. Throws ResourceError when points_per_axis^d exceeds
/// `max_nodes`.
IntegrationGrid make_tensor_grid(const Domain& domain, int points_per_axis,
                                 std::size_t max_nodes = kDefaultGridNodeBudget);

IntegrationGrid make_mc_grid(const Domain& domain, int nodes, std::uint64_t seed);

/// Tensor grid (64/axis) for d <= 3, otherwise a seeded Monte Carlo grid.
IntegrationGrid make_default_grid(const Domain& domain);

/// Bounding box of the rows of `instances`, widened by `margin` times the
/// extent on each side. Zero-width axes are widened by max(margin, 1e-6).
Domain domain_from_data(const Mat& instances, double margin);

}  // namespace maxentmil
