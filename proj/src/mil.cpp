#include "maxentmil/mil.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "maxentmil/parallel.hpp"

namespace maxentmil {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

IntegrationGrid grid_for(const PipelineConfig& cfg, const Domain& domain) {
  if (domain.dim() <= 3) return make_tensor_grid(domain, cfg.points_per_axis);
  return make_mc_grid(domain, cfg.mc_nodes, cfg.mc_seed);
}

std::vector<SufficientStats> stats_of(const LabeledBagDataset& ds, const BasisSpec& basis) {
  std::vector<SufficientStats> out(ds.bags.size());
  parallel_for(ds.bags.size(), [&](std::size_t i) {
    out[i] = suff_stats(ds.bags[i].instances, basis, ds.bags[i].bag_id);
  });
  return out;
}

// ML fit of a held-out bag restricted to lambda = U beta.
MEDensity fit_in_subspace(const SufficientStats& s, const Quadrature& quad, const Mat& u,
                          const NewtonConfig& newton) {
  if (u.cols() == 0) return make_density(Vec::Zero(quad.m()), quad, s.bag_id);
  const Quadrature reduced(quad.grid(), quad.features() * u, quad.tag());
  SufficientStats rs{s.bag_id, s.n, u.transpose() * s.phi_bar};
  const MEDensity beta = fit_sde(rs, reduced, newton);
  return make_density(u * beta.lambda, quad, s.bag_id);
}

}  // namespace

std::vector<std::string> LabeledBagDataset::classes() const {
  std::set<std::string> labels;
  for (const auto& b : bags)
    if (!b.label.empty()) labels.insert(b.label);
  return {labels.begin(), labels.end()};
}

void LabeledBagDataset::validate() const {
  if (bags.empty()) throw std::invalid_argument("dataset has no bags");
  const auto dim = bags.front().instances.cols();
  if (dim < 1) throw std::invalid_argument("dataset: instances must have at least one column");
  std::set<std::string> ids;
  for (const auto& b : bags) {
    if (b.bag_id.empty()) throw std::invalid_argument("dataset: empty bag_id");
    if (!ids.insert(b.bag_id).second)
      throw std::invalid_argument("dataset: duplicate bag_id '" + b.bag_id + "'");
    if (b.instances.rows() == 0)
      throw std::invalid_argument("dataset: bag '" + b.bag_id + "' has no instances");
    if (b.instances.cols() != dim)
      throw std::invalid_argument("dataset: bag '" + b.bag_id + "' has dimension " +
                                  std::to_string(b.instances.cols()) + ", expected " +
                                  std::to_string(dim));
    if (!b.instances.allFinite())
      throw std::invalid_argument("dataset: bag '" + b.bag_id + "' has non-finite values");
  }
}

Mat pooled_instances(const LabeledBagDataset& ds) {
  Eigen::Index rows = 0;
  for (const auto& b : ds.bags) rows += b.instances.rows();
  Mat out(rows, ds.d());
  Eigen::Index at = 0;
  for (const auto& b : ds.bags) {
    out.middleRows(at, b.instances.rows()) = b.instances;
    at += b.instances.rows();
  }
  return out;
}

PcaModel pca_fit(const Mat& pooled, int r) {
  const auto d = pooled.cols();
  if (r < 1 || r > d) throw std::invalid_argument("pca_fit: need 1 <= r <= d");
  if (pooled.rows() <= r) throw std::invalid_argument("pca_fit: need more instances than r");
  PcaModel model;
  model.mean = pooled.colwise().mean().transpose();
  const Mat centered = pooled.rowwise() - model.mean.transpose();
  const Mat cov = centered.transpose() * centered / static_cast<double>(pooled.rows());
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  model.components.resize(d, r);
  for (int j = 0; j < r; ++j) {
    Vec c = eig.eigenvectors().col(d - 1 - j);
    Eigen::Index at = 0;
    c.cwiseAbs().maxCoeff(&at);
    if (c[at] < 0) c = -c;
    model.components.col(j) = c;
  }
  return model;
}

Mat pca_apply(const PcaModel& model, const Mat& x) {
  if (x.cols() != model.mean.size())
    throw std::invalid_argument("pca_apply: dimension mismatch");
  return (x.rowwise() - model.mean.transpose()) * model.components;
}

LabeledBagDataset pca_apply(const PcaModel& model, const LabeledBagDataset& ds) {
  LabeledBagDataset out = ds;
  for (auto& b : out.bags) b.instances = pca_apply(model, b.instances);
  return out;
}

Standardizer standardizer_fit(const Mat& pooled) {
  if (pooled.rows() < 1) throw std::invalid_argument("standardizer_fit: no instances");
  Standardizer s;
  s.mean = pooled.colwise().mean().transpose();
  const Mat centered = pooled.rowwise() - s.mean.transpose();
  s.scale = (centered.colwise().squaredNorm() / static_cast<double>(pooled.rows()))
                .cwiseSqrt()
                .transpose();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale[j] > 0)) s.scale[j] = 1.0;
  return s;
}

Mat standardize(const Standardizer& s, const Mat& x) {
  if (x.cols() != s.mean.size()) throw std::invalid_argument("standardize: dimension mismatch");
  return (x.rowwise() - s.mean.transpose()).array().rowwise() / s.scale.transpose().array();
}

LabeledBagDataset standardize(const Standardizer& s, const LabeledBagDataset& ds) {
  LabeledBagDataset out = ds;
  for (auto& b : out.bags) b.instances = standardize(s, b.instances);
  return out;
}

double avg_hausdorff(const Mat& a, const Mat& b) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("avg_hausdorff: empty bag");
  if (a.cols() != b.cols()) throw std::invalid_argument("avg_hausdorff: dimension mismatch");
  std::vector<double> min_b(static_cast<std::size_t>(b.rows()),
                            std::numeric_limits<double>::infinity());
  double sum_a = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double dist = (a.row(i) - b.row(j)).norm();
      best = std::min(best, dist);
      auto& mb = min_b[static_cast<std::size_t>(j)];
      mb = std::min(mb, dist);
    }
    sum_a += best;
  }
  double sum_b = 0.0;
  for (double v : min_b) sum_b += v;
  return (sum_a + sum_b) / static_cast<double>(a.rows() + b.rows());
}

double maximal_smoothing_bandwidth(double sigma, int n) {
  if (!(sigma > 0) || n < 1)
    throw std::invalid_argument("maximal_smoothing_bandwidth: need sigma > 0, n >= 1");
  return 1.144 * sigma * std::pow(static_cast<double>(n), -0.2);
}

KdeModel kde_fit(const Mat& bag) {
  if (bag.rows() == 0) throw std::invalid_argument("kde_fit: empty bag");
  KdeModel kde;
  kde.centers = bag;
  const Vec mean = bag.colwise().mean().transpose();
  kde.bandwidth.resize(bag.cols());
  const int n = static_cast<int>(bag.rows());
  for (Eigen::Index j = 0; j < bag.cols(); ++j) {
    double sigma = std::sqrt((bag.col(j).array() - mean[j]).square().mean());
    if (!(sigma > 0)) sigma = 1.0;
    kde.bandwidth[j] = maximal_smoothing_bandwidth(sigma, n);
  }
  return kde;
}

Vec kde_log_density(const KdeModel& kde, const IntegrationGrid& grid) {
  if (grid.nodes.cols() != kde.centers.cols())
    throw std::invalid_argument("kde_log_density: grid dimension mismatch");
  const Vec inv_h = kde.bandwidth.cwiseInverse();
  const Mat z = grid.nodes * inv_h.asDiagonal();
  const Mat c = kde.centers * inv_h.asDiagonal();
  Mat e = (z * c.transpose()) * 2.0;
  e.colwise() -= z.rowwise().squaredNorm();
  e.rowwise() -= c.rowwise().squaredNorm().transpose();
  e *= 0.5;  // -|z - c|^2 / 2
  const Vec emax = e.rowwise().maxCoeff();
  Vec logf =
      emax.array() + ((e.colwise() - emax).array().exp().rowwise().sum()).log();
  const auto d = static_cast<double>(kde.centers.cols());
  logf.array() -= std::log(static_cast<double>(kde.centers.rows())) +
                  kde.bandwidth.array().log().sum() + 0.5 * d * kLog2Pi;
  const Vec s = logf + grid.weights.array().log().matrix();
  const double smax = s.maxCoeff();
  const double log_mass = smax + std::log((s.array() - smax).exp().sum());
  logf.array() -= log_mass;
  return logf;
}

double grid_sym_kl(const Vec& log_p, const Vec& log_q, const IntegrationGrid& grid) {
  if (log_p.size() != grid.size() || log_q.size() != grid.size())
    throw std::invalid_argument("grid_sym_kl: size mismatch");
  const Vec diff = log_p - log_q;
  return (grid.weights.array() * (log_p.array().exp() - log_q.array().exp()) * diff.array())
      .sum();
}

double kde_sym_kl(const KdeModel& a, const KdeModel& b, const IntegrationGrid& grid) {
  return grid_sym_kl(kde_log_density(a, grid), kde_log_density(b, grid), grid);
}

Mat pairwise_distances(std::size_t n,
                       const std::function<double(std::size_t, std::size_t)>& dist) {
  const auto nn = static_cast<Eigen::Index>(n);
  Mat out = Mat::Zero(nn, nn);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dist(i, j);
  });
  for (Eigen::Index i = 0; i < nn; ++i)
    for (Eigen::Index j = i + 1; j < nn; ++j) out(j, i) = out(i, j);
  return out;
}

Mat kernel_matrix(const Mat& distances, double gamma) {
  if (!(gamma > 0)) throw std::invalid_argument("kernel_matrix: gamma must be > 0");
  if (distances.rows() != distances.cols())
    throw std::invalid_argument("kernel_matrix: distance matrix must be square");
  return (-gamma * distances.array()).exp();
}

void CitationKnnConfig::validate() const {
  if (k < 1 || k_prime < 0)
    throw std::invalid_argument("citation-kNN: need k >= 1 and k' >= 0");
}

std::string citation_knn(const Mat& train_distances, const std::vector<std::string>& train_ids,
                         const std::vector<std::string>& train_labels, const Vec& query_distances,
                         const std::string& query_id, const CitationKnnConfig& cfg) {
  cfg.validate();
  const auto n = train_ids.size();
  const auto nn = static_cast<Eigen::Index>(n);
  if (n == 0) throw std::invalid_argument("citation_knn: empty training set");
  if (train_labels.size() != n || train_distances.rows() != nn ||
      train_distances.cols() != nn || query_distances.size() != nn)
    throw std::invalid_argument("citation_knn: inconsistent training inputs");
  if (static_cast<std::size_t>(cfg.k) > n)
    throw std::invalid_argument("citation_knn: k exceeds the training-set size");

  auto closer = [](double da, const std::string& ia, double db, const std::string& ib) {
    return da < db || (da == db && ia < ib);
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return closer(query_distances[static_cast<Eigen::Index>(a)], train_ids[a],
                  query_distances[static_cast<Eigen::Index>(b)], train_ids[b]);
  });

  std::map<std::string, std::pair<int, double>> votes;  // label -> (count, summed distance)
  for (int r = 0; r < cfg.k; ++r) {
    const auto j = order[static_cast<std::size_t>(r)];
    auto& v = votes[train_labels[j]];
    ++v.first;
    v.second += query_distances[static_cast<Eigen::Index>(j)];
  }
  if (cfg.k_prime > 0) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto ej = static_cast<Eigen::Index>(j);
      const double dq = query_distances[ej];
      int ahead = 0;
      for (std::size_t i = 0; i < n && ahead < cfg.k_prime; ++i)
        if (i != j && closer(train_distances(ej, static_cast<Eigen::Index>(i)), train_ids[i], dq,
                             query_id))
          ++ahead;
      if (ahead < cfg.k_prime) {
        auto& v = votes[train_labels[j]];
        ++v.first;
        v.second += dq;
      }
    }
  }
  const auto best = std::min_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    if (a.second.second != b.second.second) return a.second.second < b.second.second;
    return a.first < b.first;
  });
  return best->first;
}

std::string to_string(BagDistance d) {
  switch (d) {
    case BagDistance::kl_mde:
      return "kl-mde";
    case BagDistance::kl_cmen:
      return "kl-cmen";
    case BagDistance::kl_rmde:
      return "kl-rmde";
    case BagDistance::kl_kde:
      return "kl-kde";
    case BagDistance::hausdorff:
      return "hausdorff";
  }
  return "unknown";
}

BagDistance bag_distance_from_string(const std::string& s) {
  if (s == "kl-mde") return BagDistance::kl_mde;
  if (s == "kl-cmen") return BagDistance::kl_cmen;
  if (s == "kl-rmde") return BagDistance::kl_rmde;
  if (s == "kl-kde") return BagDistance::kl_kde;
  if (s == "hausdorff") return BagDistance::hausdorff;
  throw std::invalid_argument("unknown distance '" + s +
                              "' (expected kl-mde, kl-cmen, kl-rmde, kl-kde or hausdorff)");
}

void PipelineConfig::validate() const {
  if (pca_dims < 0) throw std::invalid_argument("pipeline: pca_dims must be >= 0");
  if (m < 2 || m % 2 != 0) throw std::invalid_argument("pipeline: m must be even and >= 2");
  if (!(margin >= 0)) throw std::invalid_argument("pipeline: margin must be >= 0");
  if (points_per_axis < 2 || mc_nodes < 1)
    throw std::invalid_argument("pipeline: grid sizes must be positive");
  knn.validate();
  cmen.validate();
  rmde.validate();
  newton.validate();
}

FoldDistances fold_distances(const LabeledBagDataset& train_in, const LabeledBagDataset& test_in,
                             const PipelineConfig& cfg) {
  cfg.validate();
  train_in.validate();
  if (!test_in.bags.empty()) {
    test_in.validate();
    if (test_in.d() != train_in.d())
      throw std::invalid_argument("test bags have a different dimension than train bags");
  }
  LabeledBagDataset train = train_in;
  LabeledBagDataset test = test_in;
  if (cfg.pca_dims > 0) {
    const PcaModel pca = pca_fit(pooled_instances(train), cfg.pca_dims);
    train = pca_apply(pca, train);
    test = pca_apply(pca, test);
  }
  const Standardizer st = standardizer_fit(pooled_instances(train));
  train = standardize(st, train);
  test = standardize(st, test);

  const auto ntr = train.bags.size();
  const auto nte = test.bags.size();
  FoldDistances out;
  out.query.resize(static_cast<Eigen::Index>(nte), static_cast<Eigen::Index>(ntr));

  auto fill_query = [&](const std::function<double(std::size_t, std::size_t)>& dist) {
    parallel_for(nte, [&](std::size_t i) {
      for (std::size_t j = 0; j < ntr; ++j)
        out.query(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dist(i, j);
    });
  };

  if (cfg.distance == BagDistance::hausdorff) {
    out.train = pairwise_distances(ntr, [&](std::size_t i, std::size_t j) {
      return avg_hausdorff(train.bags[i].instances, train.bags[j].instances);
    });
    fill_query([&](std::size_t i, std::size_t j) {
      return avg_hausdorff(test.bags[i].instances, train.bags[j].instances);
    });
    return out;
  }

  const Domain domain = domain_from_data(pooled_instances(train), cfg.margin);
  const IntegrationGrid grid = grid_for(cfg, domain);

  if (cfg.distance == BagDistance::kl_kde) {
    std::vector<Vec> ltr(ntr), lte(nte);
    parallel_for(ntr, [&](std::size_t i) {
      ltr[i] = kde_log_density(kde_fit(train.bags[i].instances), grid);
    });
    parallel_for(nte, [&](std::size_t i) {
      lte[i] = kde_log_density(kde_fit(test.bags[i].instances), grid);
    });
    out.train = pairwise_distances(
        ntr, [&](std::size_t i, std::size_t j) { return grid_sym_kl(ltr[i], ltr[j], grid); });
    fill_query([&](std::size_t i, std::size_t j) { return grid_sym_kl(lte[i], ltr[j], grid); });
    return out;
  }

  const Quadrature quad(make_basis(train.d(), cfg.m, cfg.basis_seed), grid);
  const auto train_stats = stats_of(train, quad.basis());
  const auto test_stats = stats_of(test, quad.basis());
  const LambdaMatrix hat = fit_mde(train_stats, quad, cfg.newton);

  std::vector<MEDensity> ptr, pte(nte);
  if (cfg.distance == BagDistance::kl_mde) {
    ptr = densities_of(hat, quad);
    parallel_for(nte, [&](std::size_t i) { pte[i] = fit_sde(test_stats[i], quad, cfg.newton); });
  } else {
    const SolverResult res = cfg.distance == BagDistance::kl_cmen
                                 ? fit_cmen(train_stats, quad, hat, cfg.cmen)
                                 : rmde_continuation(train_stats, quad, hat, cfg.rmde);
    if (res.report.warning) out.warnings.push_back(res.report.warning_message);
    ptr = densities_of(res.lambda, quad);
    const int k = res.lambda.data.isZero(0.0) ? 0 : numeric_rank(res.lambda.data, 1e-8);
    const Mat u = k > 0 ? psi_basis(res.lambda, k).directions : Mat(quad.m(), 0);
    parallel_for(nte,
                 [&](std::size_t i) { pte[i] = fit_in_subspace(test_stats[i], quad, u, cfg.newton); });
  }
  out.train = pairwise_distances(
      ntr, [&](std::size_t i, std::size_t j) { return std::max(0.0, sym_kl(ptr[i], ptr[j])); });
  fill_query([&](std::size_t i, std::size_t j) { return std::max(0.0, sym_kl(pte[i], ptr[j])); });
  return out;
}

ClassificationResult classify(const LabeledBagDataset& train, const LabeledBagDataset& test,
                              const PipelineConfig& cfg) {
  const FoldDistances dist = fold_distances(train, test, cfg);
  std::vector<std::string> ids, labels;
  for (const auto& b : train.bags) {
    ids.push_back(b.bag_id);
    labels.push_back(b.label);
  }
  ClassificationResult out;
  out.warnings = dist.warnings;
  int labeled = 0, correct = 0;
  for (std::size_t i = 0; i < test.bags.size(); ++i) {
    const auto& b = test.bags[i];
    Prediction p{b.bag_id, b.label, "", 0};
    p.predicted = citation_knn(dist.train, ids, labels,
                               dist.query.row(static_cast<Eigen::Index>(i)).transpose(),
                               b.bag_id, cfg.knn);
    if (!b.label.empty()) {
      ++labeled;
      if (p.predicted == b.label) ++correct;
    }
    out.predictions.push_back(std::move(p));
  }
  out.accuracy = labeled > 0 ? static_cast<double>(correct) / labeled : 0.0;
  return out;
}

std::vector<int> stratified_folds(const LabeledBagDataset& ds, int folds, std::uint64_t seed) {
  if (folds < 2 || static_cast<std::size_t>(folds) > ds.bags.size())
    throw std::invalid_argument("stratified_folds: need 2 <= folds <= number of bags");
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < ds.bags.size(); ++i) by_label[ds.bags[i].label].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<int> fold(ds.bags.size(), 0);
  int deal = 0;
  for (auto& [label, idx] : by_label) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i : idx) fold[i] = deal++ % folds;
  }
  return fold;
}

KfoldResult kfold_evaluate(const LabeledBagDataset& ds, int folds, const PipelineConfig& cfg,
                           std::uint64_t seed) {
  ds.validate();
  for (const auto& b : ds.bags)
    if (b.label.empty())
      throw std::invalid_argument("kfold_evaluate: bag '" + b.bag_id + "' has no label");
  const std::vector<int> fold = stratified_folds(ds, folds, seed);
  const auto classes = ds.classes();
  KfoldResult out;
  out.predictions.resize(ds.bags.size());
  for (int f = 0; f < folds; ++f) {
    LabeledBagDataset train, test;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < ds.bags.size(); ++i) {
      if (fold[i] == f) {
        test.bags.push_back(ds.bags[i]);
        test_idx.push_back(i);
      } else {
        train.bags.push_back(ds.bags[i]);
      }
    }
    const auto train_classes = train.classes();
    for (const auto& c : classes)
      if (!std::binary_search(train_classes.begin(), train_classes.end(), c))
        out.warnings.push_back("fold " + std::to_string(f) + ": class '" + c +
                               "' absent from training bags");
    ClassificationResult res = classify(train, test, cfg);
    for (auto& w : res.warnings) out.warnings.push_back("fold " + std::to_string(f) + ": " + w);
    for (std::size_t t = 0; t < test_idx.size(); ++t) {
      res.predictions[t].fold = f;
      out.predictions[test_idx[t]] = res.predictions[t];
    }
    out.fold_accuracy.push_back(res.accuracy);
  }
  double mean = 0.0;
  for (double a : out.fold_accuracy) mean += a;
  mean /= folds;
  double var = 0.0;
  for (double a : out.fold_accuracy) var += (a - mean) * (a - mean);
  out.mean_accuracy = mean;
  out.std_accuracy = std::sqrt(var / folds);
  return out;
}

}  // namespace maxentmil
