#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "maxentmil/experiments.hpp"
#include "maxentmil/mil.hpp"

namespace maxentmil {

using json = nlohmann::json;

/// Malformed input file; `line` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& msg);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// --- datasets ----------------------------------------------------------------
// JSON Lines: {"bag_id": str, "label": str (optional), "instances": [[x...], ...]}
// CSV: header bag_id[,label],x1..xd; one instance per row, bags in order of
// first appearance.

LabeledBagDataset read_dataset_jsonl(std::istream& in, const std::string& source = "<stream>");
LabeledBagDataset read_dataset_csv(std::istream& in, const std::string& source = "<stream>");
/// Picks the format from the extension (.csv, otherwise JSON Lines).
LabeledBagDataset read_dataset(const std::string& path);

void write_dataset_jsonl(std::ostream& out, const LabeledBagDataset& ds);
void write_dataset_csv(std::ostream& out, const LabeledBagDataset& ds);

// --- numbers -----------------------------------------------------------------

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

json to_json(const Vec& v);
Vec vec_from_json(const json& j, const std::string& what);
/// Row-major array of rows.
json to_json(const Mat& m);
Mat mat_from_json(const json& j, const std::string& what);

// --- records -----------------------------------------------------------------

json to_json(const SufficientStats& s);
SufficientStats stats_from_json(const json& j);
void write_stats_jsonl(std::ostream& out, const std::vector<SufficientStats>& stats);
std::vector<SufficientStats> read_stats_jsonl(std::istream& in,
                                              const std::string& source = "<stream>");

json to_json(const MEDensity& d);
json to_json(const FitReport& r);
json to_json(const PhaseCell& c);
PhaseCell phase_cell_from_json(const json& j);
json to_json(const BenchmarkRow& r);

/// Fitted densities with everything needed to rebuild their quadrature.
struct Model {
  BasisSpec basis;
  Domain domain;
  GridKind grid_kind = GridKind::tensor;
  int points_per_axis = kDefaultPointsPerAxis;
  int mc_nodes = kDefaultMonteCarloNodes;
  std::uint64_t mc_seed = kDefaultMonteCarloSeed;
  std::optional<PcaModel> pca;
  std::optional<Standardizer> standardizer;
  std::string solver;
  LambdaMatrix lambda;
  Vec log_partition;  // per column
  Mat mean_phi;       // m x N

  IntegrationGrid grid() const;
  std::vector<MEDensity> densities() const;
};

json to_json(const Model& m);
Model model_from_json(const json& j);

/// Symmetric matrix with a header row and column of bag ids.
void write_matrix_csv(std::ostream& out, const Mat& m, const std::vector<std::string>& ids);

void write_predictions_jsonl(std::ostream& out, const std::vector<Prediction>& preds);

/// Pretty-printed JSON followed by a newline.
std::string dump(const json& j);

json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace maxentmil
