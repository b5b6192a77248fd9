#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "maxentmil/error.hpp"
#include "maxentmil/experiments.hpp"
#include "maxentmil/maxent.hpp"

using namespace maxentmil;
using testing::box;

namespace {

Quadrature trig_quad(int d, int m, std::uint64_t seed, double w = 3.0, int ppa = 64) {
  return Quadrature(make_basis(d, m, seed), make_tensor_grid(box(d, w), ppa));
}

SufficientStats stats_from(const Vec& phi_bar, int n, const char* id = "b") {
  return SufficientStats{id, n, phi_bar};
}

// Reference quadrature of KL(p || q) from node densities.
double quadrature_kl(const MEDensity& p, const MEDensity& q, const Quadrature& quad) {
  const Vec lp = (quad.features() * p.lambda).array() - p.logZ;
  const Vec lq = (quad.features() * q.lambda).array() - q.logZ;
  return (quad.grid().weights.array() * lp.array().exp() * (lp - lq).array()).sum();
}

}  // namespace

TEST_SUITE("maxent") {
  TEST_CASE("suff_stats averages the basis") {
    const BasisSpec s = make_basis(2, 8, 3);
    const SufficientStats one = suff_stats(Mat::Zero(1, 2), s, "z");
    CHECK(one.n == 1);
    CHECK(one.phi_bar == eval_basis(s, Vec::Zero(2)));

    std::mt19937_64 rng(5);
    const Mat bag = testing::gaussian_matrix(37, 2, rng);
    Mat twice(74, 2);
    twice << bag, bag;
    CHECK((suff_stats(twice, s, "a").phi_bar - suff_stats(bag, s, "a").phi_bar).norm() < 1e-15);
    CHECK(testing::max_abs(suff_stats(bag, s, "a").phi_bar) <= 1.0);

    CHECK_THROWS_WITH_AS(suff_stats(Mat(0, 2), s, "empty-bag"), doctest::Contains("empty-bag"),
                         std::invalid_argument);
    CHECK_THROWS_AS(suff_stats(Mat::Zero(3, 3), s, "x"), std::invalid_argument);
  }

  TEST_CASE("uniform instances average to the uniform moment") {
    const Quadrature quad = trig_quad(2, 10, 4);
    std::mt19937_64 rng(6);
    const Mat x = testing::uniform_matrix(10000, 2, rng, -3, 3);
    const Vec phi_bar = suff_stats(x, quad.basis(), "u").phi_bar;
    const Vec uniform_mean = density_moments(Vec::Zero(10), quad).mean;
    CHECK((phi_bar - uniform_mean).cwiseAbs().maxCoeff() <= 5.0 / std::sqrt(10000.0));
  }

  TEST_CASE("log_partition basics") {
    const Quadrature quad = trig_quad(2, 12, 1);
    CHECK(log_partition(Vec::Zero(12), quad) == doctest::Approx(std::log(36.0)).epsilon(1e-12));
    std::mt19937_64 rng(9);
    for (int t = 0; t < 20; ++t) {
      const Vec lambda = testing::gaussian_vector(12, rng, 3.0);
      const Vec s = quad.features() * lambda + quad.log_weights();
      CHECK(log_partition(lambda, quad) >= s.maxCoeff());
    }
    Vec big = Vec::Constant(12, 1e3 / 12);
    CHECK(std::isfinite(log_partition(big, quad)));
    Vec bad = Vec::Zero(12);
    bad(0) = NAN;
    CHECK_THROWS_AS(log_partition(bad, quad), std::invalid_argument);
    CHECK_THROWS_AS(log_partition(Vec::Zero(5), quad), std::invalid_argument);
  }

  TEST_CASE("log_partition matches a fine reference quadrature in 1-D") {
    BasisSpec s{1, 2, 0, Mat::Ones(1, 1)};
    const Quadrature coarse(s, make_tensor_grid(box(1, 3.0), 64));
    const Quadrature fine(s, make_tensor_grid(box(1, 3.0), 4096));
    const Vec lambda = testing::vec({0.5, 0.0});
    // Reference: exp(0.5 sin x) over [-3, 3] by the midpoint rule at 4096 nodes.
    double ref = 0.0;
    const double h = 6.0 / 4096;
    for (int i = 0; i < 4096; ++i) ref += h * std::exp(0.5 * std::sin(-3.0 + (i + 0.5) * h));
    CHECK(log_partition(lambda, fine) == doctest::Approx(std::log(ref)).epsilon(1e-12));
    CHECK(std::abs(log_partition(lambda, coarse) - std::log(ref)) < 1e-3);
  }

  TEST_CASE("batched log partition agrees with the single-column path") {
    const Quadrature quad = trig_quad(2, 10, 2);
    std::mt19937_64 rng(3);
    const Mat lambdas = testing::gaussian_matrix(10, 6, rng);
    Mat means;
    const Vec z = quad.log_partition_batch(lambdas, &means);
    for (int i = 0; i < 6; ++i) {
      CHECK(z(i) == doctest::Approx(log_partition(lambdas.col(i), quad)).epsilon(1e-12));
      CHECK((means.col(i) - density_moments(lambdas.col(i), quad).mean).norm() < 1e-12);
    }
  }

  TEST_CASE("density moments") {
    const Quadrature quad = trig_quad(2, 10, 7);
    const Moments u = density_moments(Vec::Zero(10), quad);
    for (int k = 0; k < 5; ++k) CHECK(std::abs(u.mean(2 * k)) < 1e-12);

    std::mt19937_64 rng(8);
    for (int t = 0; t < 10; ++t) {
      const Vec lambda = testing::gaussian_vector(10, rng);
      const Moments mo = density_moments(lambda, quad);
      CHECK(mo.cov.diagonal().maxCoeff() <= 1.0);
      CHECK((mo.cov - mo.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      Eigen::SelfAdjointEigenSolver<Mat> es(mo.cov);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
      for (int j = 0; j < 10; ++j) {
        Vec e = Vec::Zero(10);
        e(j) = 1e-5;
        const double fd = (log_partition(lambda + e, quad) - log_partition(lambda - e, quad)) / 2e-5;
        CHECK(std::abs(fd - mo.mean(j)) < 1e-5);
      }
    }
  }

  TEST_CASE("sde objective identities") {
    const Quadrature quad = trig_quad(2, 8, 2);
    std::mt19937_64 rng(4);
    const SufficientStats st = suff_stats(testing::gaussian_matrix(50, 2, rng), quad.basis(), "b");
    CHECK(sde_objective(Vec::Zero(8), st, quad) == doctest::Approx(50 * std::log(36.0)));
    const Vec l1 = testing::gaussian_vector(8, rng), l2 = testing::gaussian_vector(8, rng);
    const double diff = sde_objective(l1, st, quad) - sde_objective(l2, st, quad);
    const double algebra = 50 * (log_partition(l1, quad) - log_partition(l2, quad) -
                                 (l1 - l2).dot(st.phi_bar));
    CHECK(diff == doctest::Approx(algebra).epsilon(1e-10));
    CHECK_THROWS_AS(sde_objective(Vec::Zero(8), stats_from(Vec::Zero(6), 5), quad),
                    std::invalid_argument);
  }

  TEST_CASE("gradient and Hessian match central differences") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 20; ++t) {
      const int m = 2 * (1 + t % 6);
      const Quadrature quad = trig_quad(2, m, 100 + t, 3.0, 48);
      const SufficientStats st = suff_stats(testing::gaussian_matrix(30, 2, rng), quad.basis(), "b");
      const Vec lambda = testing::gaussian_vector(m, rng, 0.7);
      const GradHess gh = sde_grad_hess(lambda, st, quad);
      CHECK((gh.hess - gh.hess.transpose()).cwiseAbs().maxCoeff() < 1e-9);
      for (int j = 0; j < m; ++j) {
        Vec e = Vec::Zero(m);
        e(j) = 1e-5;
        const double fd = (sde_objective(lambda + e, st, quad) - sde_objective(lambda - e, st, quad)) / 2e-5;
        CHECK(std::abs(fd - gh.grad(j)) <= 1e-5 * std::max(1.0, std::abs(gh.grad(j))));
        Vec h = Vec::Zero(m);
        h(j) = 1e-4;
        const Vec fd_col = (sde_grad_hess(lambda + h, st, quad).grad -
                            sde_grad_hess(lambda - h, st, quad).grad) / 2e-4;
        CHECK((fd_col - gh.hess.col(j)).cwiseAbs().maxCoeff() <=
              1e-4 * std::max(1.0, gh.hess.col(j).cwiseAbs().maxCoeff()));
      }
    }
  }

  TEST_CASE("fit_sde matches moments and never increases the objective") {
    const Quadrature quad = trig_quad(2, 10, 21);
    std::mt19937_64 rng(13);
    for (int t = 0; t < 5; ++t) {
      const SufficientStats st =
          suff_stats(testing::gaussian_matrix(200, 2, rng), quad.basis(), "b" + std::to_string(t));
      std::vector<double> trace;
      const MEDensity p = fit_sde(st, quad, {}, &trace);
      CHECK((p.mean_phi - st.phi_bar).cwiseAbs().maxCoeff() <= 10 * 1e-8 / st.n);
      for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= trace[k - 1]);
      CHECK(sde_objective(p.lambda, st, quad) <= sde_objective(Vec::Zero(10), st, quad));
      CHECK(sde_grad_hess(p.lambda, st, quad).grad.cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(p.logZ == doctest::Approx(log_partition(p.lambda, quad)).epsilon(1e-12));
      CHECK(p.bag_id == st.bag_id);
    }
  }

  TEST_CASE("uniform statistics give a zero parameter") {
    const Quadrature quad = trig_quad(2, 8, 5);
    const SufficientStats st = stats_from(density_moments(Vec::Zero(8), quad).mean, 100);
    CHECK(fit_sde(st, quad).lambda.cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("fit_sde reports non-convergence with the bag id") {
    const Quadrature quad = trig_quad(2, 8, 5);
    // A moment vector outside the convex hull of the features cannot be matched.
    const SufficientStats st = stats_from(Vec::Constant(8, 0.99), 10, "impossible");
    NewtonConfig cfg;
    cfg.max_iters = 5;
    try {
      fit_sde(st, quad, cfg);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.failed_bags() == std::vector<std::string>{"impossible"});
      CHECK(e.last_grad_norm() > 0);
    }
  }

  TEST_CASE("fit_sde recovers the moments of a sampled density") {
    const Quadrature quad(make_basis(2, 10, 31), make_tensor_grid(box(2, 2 * M_PI), 64));
    std::mt19937_64 rng(14);
    const Vec truth = testing::gaussian_vector(10, rng, 0.4);
    const MEDensity p = make_density(truth, quad, "t");
    const SampleSet s = rejection_sample(p, quad, 5000, 99);
    const MEDensity fit = fit_sde(suff_stats(s.instances, quad.basis(), "t"), quad);
    CHECK((fit.mean_phi - p.mean_phi).cwiseAbs().maxCoeff() <= 0.05);
  }

  TEST_CASE("kl closed form") {
    const Quadrature quad = trig_quad(2, 10, 17);
    std::mt19937_64 rng(15);
    const MEDensity a = make_density(testing::gaussian_vector(10, rng, 0.5), quad, "a");
    CHECK(kl(a, a) == 0.0);
    CHECK(sym_kl(a, a) == 0.0);
    for (int t = 0; t < 100; ++t) {
      const MEDensity p = make_density(testing::uniform_matrix(10, 1, rng, -1, 1).col(0), quad, "p");
      const MEDensity q = make_density(testing::uniform_matrix(10, 1, rng, -1, 1).col(0), quad, "q");
      const double k = kl(p, q);
      CHECK(k >= -1e-9);
      CHECK(k == doctest::Approx(quadrature_kl(p, q, quad)).epsilon(1e-3));
      CHECK(sym_kl(p, q) == sym_kl(q, p));
      CHECK(std::abs(sym_kl(p, q) - (kl(p, q) + kl(q, p))) <= 1e-10);
    }
    const Quadrature other = trig_quad(2, 10, 18);
    const MEDensity b = make_density(Vec::Zero(10), other, "b");
    CHECK_THROWS_AS(kl(a, b), std::invalid_argument);
    CHECK_THROWS_AS(sym_kl(a, b), std::invalid_argument);
  }

  TEST_CASE("log density integrates to one and flags out-of-domain points") {
    const Quadrature quad = trig_quad(2, 10, 19);
    const MEDensity u = make_density(Vec::Zero(10), quad);
    CHECK(log_density(u, quad, Vec::Zero(2)).value == doctest::Approx(-std::log(36.0)));
    std::mt19937_64 rng(16);
    const MEDensity p = make_density(testing::gaussian_vector(10, rng), quad);
    double total = 0.0;
    for (Eigen::Index q = 0; q < quad.grid().size(); ++q)
      total += quad.grid().weights(q) *
               std::exp(log_density_from_features(p, quad.features().row(q).transpose()));
    CHECK(std::abs(total - 1.0) < 1e-6);
    const LogDensity outside = log_density(p, quad, Vec::Constant(2, 10.0));
    CHECK_FALSE(outside.in_domain);
    CHECK(std::isfinite(outside.value));
    CHECK(log_density(p, quad, Vec::Zero(2)).in_domain);
  }

  TEST_CASE("polynomial features reproduce the Gaussian closed form") {
    const IntegrationGrid grid = make_tensor_grid(box(1, 12.0), 4096);
    Mat features(grid.size(), 2);
    features.col(0) = grid.nodes.col(0);
    features.col(1) = grid.nodes.col(0).array().square();
    const Quadrature quad(grid, features, 77);
    const Vec lambda = testing::vec({0.0, -0.5});
    const double closed = -lambda(0) * lambda(0) / (4 * lambda(1)) + std::log(std::sqrt(M_PI / -lambda(1)));
    CHECK(log_partition(lambda, quad) == doctest::Approx(closed).epsilon(1e-9));
    const MEDensity p = make_density(lambda, quad);
    CHECK(std::abs(std::exp(log_density_from_features(p, testing::vec({0.0, 0.0}))) - 0.39894) < 1e-3);
  }

  TEST_CASE("hoeffding bound formula") {
    CHECK(hoeffding_delta_bound(100, 10, 0.05) == doctest::Approx(0.34627).epsilon(1e-4));
    CHECK(hoeffding_delta_bound(400, 10, 0.05) ==
          doctest::Approx(hoeffding_delta_bound(100, 10, 0.05) / 2).epsilon(1e-12));
    CHECK(hoeffding_delta_bound(100, 20, 0.05) > hoeffding_delta_bound(100, 10, 0.05));
    CHECK_THROWS_AS(hoeffding_delta_bound(0, 10, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(hoeffding_delta_bound(10, 10, 1.0), std::invalid_argument);
  }

  TEST_CASE("hoeffding bound covers resampled moment deviations") {
    const Quadrature quad(make_basis(2, 10, 41), make_tensor_grid(box(2, 2 * M_PI), 64));
    std::mt19937_64 rng(17);
    const MEDensity p = make_density(testing::gaussian_vector(10, rng, 0.3), quad);
    const int n = 100;
    const SampleSet pool = rejection_sample(p, quad, 500 * n, 5);
    const double bound = hoeffding_delta_bound(n, 10, 0.05);
    int exceed = 0;
    for (int r = 0; r < 500; ++r) {
      const Vec phi_bar = suff_stats(pool.instances.middleRows(r * n, n), quad.basis(), "r").phi_bar;
      if ((phi_bar - p.mean_phi).cwiseAbs().maxCoeff() > bound) ++exceed;
    }
    CHECK(exceed / 500.0 <= 0.08);
  }
}
