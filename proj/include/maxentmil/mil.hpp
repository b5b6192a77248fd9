#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "maxentmil/solvers.hpp"

namespace maxentmil {

struct Bag {
  std::string bag_id;
  std::string label;  // empty when unlabeled
  Mat instances;      // n x d
};

struct LabeledBagDataset {
  std::vector<Bag> bags;

  int d() const { return bags.empty() ? 0 : static_cast<int>(bags.front().instances.cols()); }
  /// Sorted distinct labels.
  std::vector<std::string> classes() const;
  /// Nonempty, unique ids, shared d, no empty bag, finite entries.
  void validate() const;
};

/// All instances stacked in bag order.
Mat pooled_instances(const LabeledBagDataset& ds);

struct PcaModel {
  Vec mean;
  Mat components;  // d x r, orthonormal columns
  int r() const { return static_cast<int>(components.cols()); }
};

/// Top-r covariance eigenvectors, descending eigenvalue, each column signed
/// so its largest-magnitude entry is positive.
PcaModel pca_fit(const Mat& pooled, int r);
Mat pca_apply(const PcaModel& model, const Mat& x);
LabeledBagDataset pca_apply(const PcaModel& model, const LabeledBagDataset& ds);

/// Per-axis affine map to zero mean and unit (population) variance. Constant
/// axes keep scale 1.
struct Standardizer {
  Vec mean;
  Vec scale;
};

Standardizer standardizer_fit(const Mat& pooled);
Mat standardize(const Standardizer& s, const Mat& x);
LabeledBagDataset standardize(const Standardizer& s, const LabeledBagDataset& ds);

/// (sum_a min_b |a-b| + sum_b min_a |a-b|) / (|A| + |B|)
double avg_hausdorff(const Mat& a, const Mat& b);

/// Gaussian mixture with one bump per instance and per-axis bandwidths.
struct KdeModel {
  Mat centers;    // n x d
  Vec bandwidth;  // d
};

/// 1.144 sigma n^(-1/5)
double maximal_smoothing_bandwidth(double sigma, int n);

/// Bandwidth per axis from the bag's own population standard deviation; an
/// axis with zero spread falls back to sigma = 1.
KdeModel kde_fit(const Mat& bag);

/// Log density at every grid node, renormalized so the weighted sum of the
/// density over the grid is one.
Vec kde_log_density(const KdeModel& kde, const IntegrationGrid& grid);

/// Symmetric KL of two grid log-densities: sum_q w_q (p - q)(log p - log q).
double grid_sym_kl(const Vec& log_p, const Vec& log_q, const IntegrationGrid& grid);

double kde_sym_kl(const KdeModel& a, const KdeModel& b, const IntegrationGrid& grid);

/// Symmetric matrix with zero diagonal; entry (i, j) = dist(i, j) for i < j.
Mat pairwise_distances(std::size_t n, const std::function<double(std::size_t, std::size_t)>& dist);

/// exp(-gamma D), elementwise.
Mat kernel_matrix(const Mat& distances, double gamma);

struct CitationKnnConfig {
  int k = 3;
  int k_prime = 5;
  void validate() const;
};

/// References: the k train bags nearest the query. Citers: train bags that
/// rank the query among their k' nearest over the other train bags plus the
/// query. Ties in ranking break by bag id. The vote counts references and
/// citers; tied labels break by smaller summed distance, then by label.
std::string citation_knn(const Mat& train_distances, const std::vector<std::string>& train_ids,
                         const std::vector<std::string>& train_labels, const Vec& query_distances,
                         const std::string& query_id, const CitationKnnConfig& cfg);

enum class BagDistance { kl_mde, kl_cmen, kl_rmde, kl_kde, hausdorff };

std::string to_string(BagDistance d);
BagDistance bag_distance_from_string(const std::string& s);

struct PipelineConfig {
  BagDistance distance = BagDistance::kl_mde;
  int pca_dims = 0;  // 0 keeps the input dimension
  int m = 20;
  std::uint64_t basis_seed = 1;
  double margin = 0.1;
  int points_per_axis = kDefaultPointsPerAxis;
  int mc_nodes = kDefaultMonteCarloNodes;
  std::uint64_t mc_seed = kDefaultMonteCarloSeed;
  CitationKnnConfig knn;
  CmenaConfig cmen;
  RmdeConfig rmde;
  NewtonConfig newton;

  void validate() const;
};

/// Distances after preprocessing fitted on `train` only.
struct FoldDistances {
  Mat train;  // n_train x n_train
  Mat query;  // n_test x n_train
  std::vector<std::string> warnings;
};

FoldDistances fold_distances(const LabeledBagDataset& train, const LabeledBagDataset& test,
                             const PipelineConfig& cfg);

struct Prediction {
  std::string bag_id;
  std::string truth;
  std::string predicted;
  int fold = 0;
};

struct ClassificationResult {
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
  std::vector<std::string> warnings;
};

ClassificationResult classify(const LabeledBagDataset& train, const LabeledBagDataset& test,
                              const PipelineConfig& cfg);

/// Fold index per bag: each class is shuffled with the seed and dealt
/// round-robin, continuing the deal across classes in label order.
std::vector<int> stratified_folds(const LabeledBagDataset& ds, int folds, std::uint64_t seed);

struct KfoldResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population
  std::vector<double> fold_accuracy;
  std::vector<Prediction> predictions;  // bag order of the input
  std::vector<std::string> warnings;
};

KfoldResult kfold_evaluate(const LabeledBagDataset& ds, int folds, const PipelineConfig& cfg,
                           std::uint64_t seed);

}  // namespace maxentmil
