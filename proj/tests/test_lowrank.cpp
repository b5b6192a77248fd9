#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "maxentmil/lowrank.hpp"

using namespace maxentmil;

namespace {

// Closed-form prox computed independently from a full (not thin) SVD.
Mat reference_shrink(const Mat& x, double alpha) {
  Eigen::JacobiSVD<Mat> svd(x, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec s = (svd.singularValues().array() - alpha).max(0.0);
  const Eigen::Index r = s.size();
  return svd.matrixU().leftCols(r) * s.asDiagonal() * svd.matrixV().leftCols(r).transpose();
}

double prox_objective(const Mat& y, const Mat& x, double alpha) {
  return alpha * nuclear_norm(y) + 0.5 * (x - y).squaredNorm();
}

// Matrix with prescribed singular values and random orthonormal factors.
Mat with_spectrum(const Vec& s, int rows, int cols, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Mat> qu(testing::gaussian_matrix(rows, rows, rng));
  Eigen::HouseholderQR<Mat> qv(testing::gaussian_matrix(cols, cols, rng));
  const Mat u = qu.householderQ() * Mat::Identity(rows, s.size());
  const Mat v = qv.householderQ() * Mat::Identity(cols, s.size());
  return u * s.asDiagonal() * v.transpose();
}

}  // namespace

TEST_SUITE("lowrank") {
  TEST_CASE("svd invariants") {
    Mat d = Mat::Zero(2, 2);
    d.diagonal() << 1, 3;
    CHECK(svd(d).S.isApprox(testing::vec({3, 1})));
    CHECK(svd(Mat::Zero(4, 3)).S.cwiseAbs().maxCoeff() == 0.0);

    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
      const Mat x = testing::gaussian_matrix(8, 6, rng);
      const SvdFactors f = svd(x);
      CHECK((f.U.transpose() * f.U - Mat::Identity(f.rank(), f.rank())).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((f.V.transpose() * f.V - Mat::Identity(f.rank(), f.rank())).cwiseAbs().maxCoeff() <= 1e-10);
      for (Eigen::Index i = 1; i < f.S.size(); ++i) CHECK(f.S(i) <= f.S(i - 1));
      CHECK((f.reconstruct() - x).norm() <= 1e-8 * x.norm());
      Eigen::SelfAdjointEigenSolver<Mat> es(x.transpose() * x);
      Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().reverse();
      CHECK((ev - f.S).cwiseAbs().maxCoeff() <= 1e-8);
    }
    Mat bad = Mat::Zero(2, 2);
    bad(0, 0) = NAN;
    CHECK_THROWS_AS(svd(bad), std::invalid_argument);
  }

  TEST_CASE("nuclear norm") {
    CHECK(nuclear_norm(Mat::Identity(3, 3)) == doctest::Approx(3.0));
    std::mt19937_64 rng(2);
    const Vec u = testing::gaussian_vector(5, rng).normalized();
    const Vec v = testing::gaussian_vector(4, rng).normalized();
    CHECK(nuclear_norm(u * v.transpose()) == doctest::Approx(1.0));
    for (int t = 0; t < 100; ++t) {
      const Mat a = testing::gaussian_matrix(6, 5, rng), b = testing::gaussian_matrix(6, 5, rng);
      CHECK(nuclear_norm(a + b) <= nuclear_norm(a) + nuclear_norm(b) + 1e-9);
    }
  }

  TEST_CASE("soft threshold against the closed form and perturbations") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
      const Mat x = testing::gaussian_matrix(8, 6, rng);
      const double alpha = 0.3 + 0.01 * t;
      const Mat y = soft_threshold(x, alpha);
      CHECK((y - reference_shrink(x, alpha)).cwiseAbs().maxCoeff() <= 1e-10);
      const double best = prox_objective(y, x, alpha);
      for (int p = 0; p < 200; ++p) {
        const Mat pert = y + 1e-3 * testing::gaussian_matrix(8, 6, rng);
        REQUIRE(best <= prox_objective(pert, x, alpha));
      }
    }
  }

  TEST_CASE("soft threshold edge cases") {
    std::mt19937_64 rng(4);
    const Mat x = testing::gaussian_matrix(5, 4, rng);
    CHECK((soft_threshold(x, 0.0) - x).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(soft_threshold(x, svd(x).S(0)).isZero(0.0));
    CHECK(soft_threshold(x, 1e9).isZero(0.0));
    Mat d = Mat::Zero(3, 3);
    d.diagonal() << 2, 1, 0.5;
    CHECK(numeric_rank(soft_threshold(d, 1.0), 1e-12) == 1);  // value equal to alpha maps to zero
    CHECK_THROWS_AS(soft_threshold(x, -1.0), std::invalid_argument);
  }

  TEST_CASE("soft threshold is non-expansive and rank is monotone in alpha") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
      const Mat a = testing::gaussian_matrix(7, 5, rng), b = testing::gaussian_matrix(7, 5, rng);
      const double alpha = 0.5;
      CHECK((soft_threshold(a, alpha) - soft_threshold(b, alpha)).norm() <= (a - b).norm() + 1e-12);
      int prev = 100;
      for (double al : {0.0, 0.2, 0.5, 1.0, 2.0, 4.0}) {
        const int r = numeric_rank(soft_threshold(a, al), 1e-12);
        CHECK(r <= prev);
        prev = r;
      }
    }
  }

  TEST_CASE("numeric rank") {
    Mat d = Mat::Zero(2, 2);
    d.diagonal() << 3, 1;
    CHECK(numeric_rank(d, 2.0) == 1);
    CHECK(numeric_rank(d, 1.0) == 1);  // strict
    CHECK(numeric_rank(Mat::Zero(3, 3), 1e-8) == 0);
    std::mt19937_64 rng(6);
    const Mat x = testing::gaussian_matrix(8, 3, rng) * testing::gaussian_matrix(3, 6, rng);
    CHECK(numeric_rank(x, 1e-8) == 3);
    CHECK_THROWS_AS(numeric_rank(d, 0.0), std::invalid_argument);
  }

  TEST_CASE("rank ladder rounds and equivalence") {
    std::mt19937_64 rng(7);
    Vec s(12);
    s << 12, 11, 10, 9, 8, 7, 6, 0.5, 0.4, 0.3, 0.2, 0.1;
    const Mat x = with_spectrum(s, 15, 12, rng);
    int rounds = 0;
    const SvdFactors f = rank_ladder_svd(x, 1.0, 5, 5, &rounds);
    CHECK(f.rank() == 7);
    CHECK(rounds == 2);
    CHECK(rank_ladder_svd(x, 100.0).rank() == 0);

    for (int t = 0; t < 50; ++t) {
      const Mat y = testing::gaussian_matrix(10 + t % 5, 8 + t % 4, rng);
      const SvdFactors full = svd(y);
      const double cut = full.S(full.S.size() / 2);  // straddles the spectrum
      const SvdFactors lad = rank_ladder_svd(y, cut, 2, 3);
      const int keep = static_cast<int>((full.S.array() > cut).count());
      REQUIRE(lad.rank() == keep);
      CHECK((lad.S - full.S.head(keep)).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((lad.reconstruct() - full.U.leftCols(keep) * full.S.head(keep).asDiagonal() *
                                     full.V.leftCols(keep).transpose())
                .cwiseAbs()
                .maxCoeff() <= 1e-10);
    }
    CHECK_THROWS_AS(rank_ladder_svd(x, 0.0), std::invalid_argument);
  }
}
