#pragma once

#include <cmath>
#include <initializer_list>
#include <random>

#include "maxentmil/basis.hpp"

namespace testing {

using maxentmil::Mat;
using maxentmil::Vec;

inline Mat gaussian_matrix(int rows, int cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Mat x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

inline Vec gaussian_vector(int n, std::mt19937_64& rng, double sd = 1.0) {
  return gaussian_matrix(n, 1, rng, sd).col(0);
}

inline Mat uniform_matrix(int rows, int cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

/// Box [-w, w]^d.
inline maxentmil::Domain box(int d, double w) {
  return maxentmil::Domain(Vec::Constant(d, -w), Vec::Constant(d, w));
}

inline Vec vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

inline double max_abs(const Mat& x) { return x.size() ? x.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing
