#pragma once

#include "maxentmil/basis.hpp"

namespace maxentmil {

/// Thin SVD, singular values descending.
struct SvdFactors {
  Mat U;  // rows x r
  Vec S;  // r
  Mat V;  // cols x r

  Eigen::Index rank() const { return S.size(); }
  Mat reconstruct() const;
};

SvdFactors svd(const Mat& x);

double nuclear_norm(const Mat& x);

/// Singular value shrinkage U (S - alpha)_+ V^T; the proximal map of
/// alpha * nuclear norm. A singular value equal to alpha maps to zero.
Mat soft_threshold(const Mat& x, double alpha);

/// Number of singular values strictly above `threshold`.
int numeric_rank(const Mat& x, double threshold);

/// Singular triplets with S_i > cut, computed by requesting `start` values and
/// growing the request by `step` while the smallest value returned still
/// exceeds the cut. `rounds` receives the number of requests made.
SvdFactors rank_ladder_svd(const Mat& x, double cut, int start = 5, int step = 5,
                           int* rounds = nullptr);

}  // namespace maxentmil
