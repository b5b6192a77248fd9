#include "maxentmil/lowrank.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace maxentmil {
namespace {

void require_finite(const Mat& x, const char* where) {
  if (!x.allFinite()) throw std::invalid_argument(std::string(where) + ": non-finite entries");
}

SvdFactors head(const SvdFactors& f, Eigen::Index r) {
  return {f.U.leftCols(r), f.S.head(r), f.V.leftCols(r)};
}

}  // namespace

Mat SvdFactors::reconstruct() const { return U * S.asDiagonal() * V.transpose(); }

SvdFactors svd(const Mat& x) {
  require_finite(x, "svd");
  if (x.size() == 0) return {Mat(x.rows(), 0), Vec(0), Mat(x.cols(), 0)};
  Eigen::BDCSVD<Mat> dec(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

double nuclear_norm(const Mat& x) {
  require_finite(x, "nuclear_norm");
  if (x.size() == 0) return 0.0;
  return Eigen::BDCSVD<Mat>(x).singularValues().sum();
}

Mat soft_threshold(const Mat& x, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("soft_threshold: alpha must be >= 0");
  const SvdFactors f = svd(x);
  Eigen::Index r = 0;
  while (r < f.S.size() && f.S[r] > alpha) ++r;
  if (r == 0) return Mat::Zero(x.rows(), x.cols());
  const Vec shrunk = f.S.head(r).array() - alpha;
  return f.U.leftCols(r) * shrunk.asDiagonal() * f.V.leftCols(r).transpose();
}

int numeric_rank(const Mat& x, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("numeric_rank: threshold must be > 0");
  require_finite(x, "numeric_rank");
  if (x.size() == 0) return 0;
  const Vec s = Eigen::BDCSVD<Mat>(x).singularValues();
  return static_cast<int>((s.array() > threshold).count());
}

SvdFactors rank_ladder_svd(const Mat& x, double cut, int start, int step, int* rounds) {
  if (!(cut > 0.0)) throw std::invalid_argument("rank_ladder_svd: cut must be > 0");
  if (start < 1 || step < 1)
    throw std::invalid_argument("rank_ladder_svd: start and step must be >= 1");
  // Dense backend: every request is served from one full decomposition, so a
  // truncated iterative solver can replace `full` without changing the ladder.
  const SvdFactors full = svd(x);
  const auto available = full.S.size();
  Eigen::Index requested = std::min<Eigen::Index>(start, available);
  int count = 1;
  while (requested < available && full.S[requested - 1] > cut) {
    requested = std::min<Eigen::Index>(requested + step, available);
    ++count;
  }
  if (rounds) *rounds = available == 0 ? 0 : count;
  Eigen::Index r = 0;
  while (r < requested && full.S[r] > cut) ++r;
  return head(full, r);
}

}  // namespace maxentmil
