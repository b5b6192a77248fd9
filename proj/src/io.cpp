#include "maxentmil/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace maxentmil {

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& msg)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + msg
                                  : source + ": " + msg),
      line_(line) {}

namespace {

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r") == std::string::npos;
}

// Fields separated by commas; double quotes protect commas and "" escapes a quote.
std::vector<std::string> split_csv(const std::string& line, const std::string& source,
                                   std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError(source, line_no, "unterminated quoted field");
  out.push_back(field);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

double parse_number(const std::string& text, const std::string& source, std::size_t line_no,
                    const std::string& column) {
  std::size_t b = text.find_first_not_of(" \t");
  std::size_t e = text.find_last_not_of(" \t");
  if (b == std::string::npos) throw ParseError(source, line_no, "empty value in column " + column);
  const char* first = text.data() + b;
  const char* last = text.data() + e + 1;
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(source, line_no,
                     "invalid number '" + text.substr(b, e - b + 1) + "' in column " + column);
  }
  return v;
}

std::string label_of(const json& j, const std::string& source, std::size_t line_no) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_null()) return {};
  throw ParseError(source, line_no, "label must be a string or an integer");
}

void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& what) {
  if (!j.is_object()) throw std::invalid_argument(what + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw std::invalid_argument(what + ": unknown key '" + it.key() + "'");
  }
}

const json& field(const json& j, const char* key, const std::string& what) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(what + ": missing key '" + key + "'");
  return *it;
}

}  // namespace

// --- datasets ----------------------------------------------------------------

LabeledBagDataset read_dataset_jsonl(std::istream& in, const std::string& source) {
  LabeledBagDataset ds;
  std::map<std::string, std::size_t> line_of;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(source, line_no, "expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "bag_id" && it.key() != "label" && it.key() != "instances") {
        throw ParseError(source, line_no, "unknown key '" + it.key() + "'");
      }
    }
    if (!j.contains("bag_id") || !j["bag_id"].is_string()) {
      throw ParseError(source, line_no, "missing string bag_id");
    }
    Bag bag;
    bag.bag_id = j["bag_id"].get<std::string>();
    if (bag.bag_id.empty()) throw ParseError(source, line_no, "empty bag_id");
    if (line_of.count(bag.bag_id)) {
      throw ParseError(source, line_no,
                       "duplicate bag_id '" + bag.bag_id + "' (first on line " +
                           std::to_string(line_of[bag.bag_id]) + ")");
    }
    line_of[bag.bag_id] = line_no;
    if (j.contains("label")) bag.label = label_of(j["label"], source, line_no);
    if (!j.contains("instances") || !j["instances"].is_array()) {
      throw ParseError(source, line_no, "bag '" + bag.bag_id + "': missing instances array");
    }
    const json& rows = j["instances"];
    if (rows.empty()) throw ParseError(source, line_no, "bag '" + bag.bag_id + "' is empty");
    const std::size_t d = rows[0].is_array() ? rows[0].size() : 0;
    if (d == 0) {
      throw ParseError(source, line_no, "bag '" + bag.bag_id + "': instances must be nonempty arrays");
    }
    if (ds.d() > 0 && static_cast<int>(d) != ds.d()) {
      throw ParseError(source, line_no,
                       "bag '" + bag.bag_id + "' has dimension " + std::to_string(d) +
                           ", expected " + std::to_string(ds.d()));
    }
    bag.instances.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r].is_array() || rows[r].size() != d) {
        throw ParseError(source, line_no,
                         "bag '" + bag.bag_id + "': instance " + std::to_string(r) +
                             " does not have " + std::to_string(d) + " coordinates");
      }
      for (std::size_t c = 0; c < d; ++c) {
        const json& v = rows[r][c];
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
          throw ParseError(source, line_no,
                           "bag '" + bag.bag_id + "': non-numeric or non-finite coordinate");
        }
        bag.instances(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v.get<double>();
      }
    }
    ds.bags.push_back(std::move(bag));
  }
  if (ds.bags.empty()) throw ParseError(source, 0, "no bags");
  return ds;
}

LabeledBagDataset read_dataset_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (blank(line)) continue;
    header = split_csv(line, source, line_no);
    break;
  }
  if (header.empty()) throw ParseError(source, 0, "missing header");
  if (header[0] != "bag_id") throw ParseError(source, line_no, "first column must be bag_id");
  const bool has_label = header.size() > 1 && header[1] == "label";
  const std::size_t first_x = has_label ? 2 : 1;
  if (header.size() <= first_x) throw ParseError(source, line_no, "no coordinate columns");
  const std::size_t d = header.size() - first_x;
  for (std::size_t c = 0; c < d; ++c) {
    if (header[first_x + c] != "x" + std::to_string(c + 1)) {
      throw ParseError(source, line_no,
                       "expected column x" + std::to_string(c + 1) + ", found '" +
                           header[first_x + c] + "'");
    }
  }

  std::vector<std::string> order;
  std::map<std::string, std::pair<std::string, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (blank(line)) continue;
    auto cells = split_csv(line, source, line_no);
    if (cells.size() != header.size()) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(cells.size()));
    }
    const std::string& id = cells[0];
    if (id.empty()) throw ParseError(source, line_no, "empty bag_id");
    std::string label = has_label ? cells[1] : std::string();
    auto it = rows.find(id);
    if (it == rows.end()) {
      order.push_back(id);
      it = rows.emplace(id, std::make_pair(label, std::vector<double>{})).first;
    } else if (it->second.first != label) {
      throw ParseError(source, line_no, "bag '" + id + "' has conflicting labels");
    }
    for (std::size_t c = 0; c < d; ++c) {
      it->second.second.push_back(
          parse_number(cells[first_x + c], source, line_no, header[first_x + c]));
    }
  }
  if (order.empty()) throw ParseError(source, line_no, "no instances");

  LabeledBagDataset ds;
  for (const auto& id : order) {
    const auto& [label, values] = rows[id];
    Bag bag{id, label, Mat(static_cast<Eigen::Index>(values.size() / d), static_cast<Eigen::Index>(d))};
    for (Eigen::Index r = 0; r < bag.instances.rows(); ++r) {
      for (Eigen::Index c = 0; c < bag.instances.cols(); ++c) {
        bag.instances(r, c) = values[static_cast<std::size_t>(r) * d + static_cast<std::size_t>(c)];
      }
    }
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

LabeledBagDataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  LabeledBagDataset ds = csv ? read_dataset_csv(in, path) : read_dataset_jsonl(in, path);
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path, 0, e.what());
  }
  return ds;
}

void write_dataset_jsonl(std::ostream& out, const LabeledBagDataset& ds) {
  for (const auto& bag : ds.bags) {
    json j;
    j["bag_id"] = bag.bag_id;
    if (!bag.label.empty()) j["label"] = bag.label;
    j["instances"] = to_json(bag.instances);
    out << j.dump() << '\n';
  }
}

void write_dataset_csv(std::ostream& out, const LabeledBagDataset& ds) {
  bool labeled = false;
  for (const auto& bag : ds.bags) labeled = labeled || !bag.label.empty();
  out << "bag_id";
  if (labeled) out << ",label";
  for (int c = 0; c < ds.d(); ++c) out << ",x" << (c + 1);
  out << '\n';
  for (const auto& bag : ds.bags) {
    for (Eigen::Index r = 0; r < bag.instances.rows(); ++r) {
      out << csv_field(bag.bag_id);
      if (labeled) out << ',' << csv_field(bag.label);
      for (Eigen::Index c = 0; c < bag.instances.cols(); ++c) {
        out << ',' << format_double(bag.instances(r, c));
      }
      out << '\n';
    }
  }
}

// --- numbers -----------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

json to_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Vec vec_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw std::invalid_argument(what + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument(what + ": expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json to_json(const Mat& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(std::move(row));
  }
  return j;
}

Mat mat_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw std::invalid_argument(what + ": expected an array of rows");
  if (j.empty()) return Mat();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw std::invalid_argument(what + ": ragged rows");
    }
    m.row(static_cast<Eigen::Index>(r)) = vec_from_json(j[r], what).transpose();
  }
  return m;
}

// --- records -----------------------------------------------------------------

json to_json(const SufficientStats& s) {
  return json{{"bag_id", s.bag_id}, {"n", s.n}, {"phi_bar", to_json(s.phi_bar)}};
}

SufficientStats stats_from_json(const json& j) {
  require_keys(j, {"bag_id", "n", "phi_bar"}, "stats");
  SufficientStats s;
  s.bag_id = field(j, "bag_id", "stats").get<std::string>();
  s.n = field(j, "n", "stats").get<int>();
  s.phi_bar = vec_from_json(field(j, "phi_bar", "stats"), "stats.phi_bar");
  return s;
}

void write_stats_jsonl(std::ostream& out, const std::vector<SufficientStats>& stats) {
  for (const auto& s : stats) out << to_json(s).dump() << '\n';
}

std::vector<SufficientStats> read_stats_jsonl(std::istream& in, const std::string& source) {
  std::vector<SufficientStats> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      out.push_back(stats_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

json to_json(const MEDensity& d) {
  return json{{"bag_id", d.bag_id},
              {"lambda", to_json(d.lambda)},
              {"logZ", d.logZ},
              {"mean_phi", to_json(d.mean_phi)}};
}

json to_json(const FitReport& r) {
  json j;
  j["solver"] = r.solver;
  j["objective_trace"] = r.objective_trace;
  j["constraint_trace"] = r.constraint_trace;
  j["rank_trace"] = r.rank_trace;
  j["z_trace"] = r.z_trace;
  j["eta_trace"] = r.eta_trace;
  j["inner_iters"] = r.inner_iters;
  j["outer_iters"] = r.outer_iters;
  j["accepted_steps"] = r.accepted_steps;
  j["majorization_violations"] = r.majorization_violations;
  j["momentum_restarts"] = r.momentum_restarts;
  j["epsilon"] = r.epsilon;
  j["g_final"] = r.g_final;
  j["tau_lipschitz"] = r.tau_lipschitz;
  j["tau_unweighted"] = r.tau_paper;
  j["stationarity"] = r.stationarity;
  j["warning"] = r.warning;
  j["warning_message"] = r.warning_message;
  j["wall_time"] = r.wall_time;
  return j;
}

json to_json(const PhaseCell& c) {
  json warnings = json::array();
  for (bool w : c.warnings) warnings.push_back(w);
  return json{{"m", c.m},
              {"T", c.T},
              {"recovery_probability", c.recovery_probability},
              {"threshold", c.threshold},
              {"ranks", c.ranks},
              {"warnings", warnings},
              {"wall_time", c.wall_time}};
}

PhaseCell phase_cell_from_json(const json& j) {
  require_keys(j, {"m", "T", "recovery_probability", "threshold", "ranks", "warnings", "wall_time"},
               "phase cell");
  PhaseCell c;
  c.m = field(j, "m", "phase cell").get<int>();
  c.T = field(j, "T", "phase cell").get<int>();
  c.recovery_probability = field(j, "recovery_probability", "phase cell").get<double>();
  c.threshold = field(j, "threshold", "phase cell").get<double>();
  c.ranks = field(j, "ranks", "phase cell").get<std::vector<int>>();
  for (const auto& w : field(j, "warnings", "phase cell")) c.warnings.push_back(w.get<bool>());
  c.wall_time = field(j, "wall_time", "phase cell").get<double>();
  return c;
}

json to_json(const BenchmarkRow& r) {
  return json{{"operation", r.operation},     {"n_small", r.n_small},
              {"n_large", r.n_large},         {"seconds_small", r.seconds_small},
              {"seconds_large", r.seconds_large}, {"ratio", r.ratio()}};
}

// --- model -------------------------------------------------------------------

IntegrationGrid Model::grid() const {
  return grid_kind == GridKind::tensor ? make_tensor_grid(domain, points_per_axis)
                                       : make_mc_grid(domain, mc_nodes, mc_seed);
}

std::vector<MEDensity> Model::densities() const {
  std::vector<MEDensity> out;
  for (Eigen::Index i = 0; i < lambda.bags(); ++i) {
    MEDensity d;
    d.bag_id = lambda.bag_ids[static_cast<std::size_t>(i)];
    d.lambda = lambda.data.col(i);
    d.logZ = log_partition(i);
    d.mean_phi = mean_phi.col(i);
    d.basis_seed = basis.seed;
    out.push_back(std::move(d));
  }
  return out;
}

json to_json(const Model& m) {
  json j;
  j["format"] = "maxentmil-model/1";
  j["basis"] = json{{"d", m.basis.d},
                    {"m", m.basis.m},
                    {"seed", m.basis.seed},
                    {"freqs", to_json(m.basis.freqs)}};
  j["domain"] = json{{"lo", to_json(m.domain.lo())}, {"hi", to_json(m.domain.hi())}};
  if (m.grid_kind == GridKind::tensor) {
    j["grid"] = json{{"kind", "tensor"}, {"points_per_axis", m.points_per_axis}};
  } else {
    j["grid"] = json{{"kind", "monte-carlo"}, {"nodes", m.mc_nodes}, {"seed", m.mc_seed}};
  }
  json pre = json::object();
  pre["pca"] = m.pca ? json{{"mean", to_json(m.pca->mean)},
                            {"components", to_json(m.pca->components)}}
                     : json(nullptr);
  pre["standardizer"] = m.standardizer ? json{{"mean", to_json(m.standardizer->mean)},
                                              {"scale", to_json(m.standardizer->scale)}}
                                       : json(nullptr);
  j["preprocess"] = pre;
  j["solver"] = m.solver;
  json bags = json::array();
  for (Eigen::Index i = 0; i < m.lambda.bags(); ++i) {
    bags.push_back(json{{"bag_id", m.lambda.bag_ids[static_cast<std::size_t>(i)]},
                        {"lambda", to_json(Vec(m.lambda.data.col(i)))},
                        {"logZ", m.log_partition(i)},
                        {"mean_phi", to_json(Vec(m.mean_phi.col(i)))}});
  }
  j["bags"] = bags;
  return j;
}

Model model_from_json(const json& j) {
  const std::string what = "model";
  require_keys(j, {"format", "basis", "domain", "grid", "preprocess", "solver", "bags"}, what);
  if (field(j, "format", what) != "maxentmil-model/1") {
    throw std::invalid_argument("model: unsupported format");
  }
  Model m;
  const json& b = field(j, "basis", what);
  require_keys(b, {"d", "m", "seed", "freqs"}, "model.basis");
  m.basis.d = field(b, "d", "model.basis").get<int>();
  m.basis.m = field(b, "m", "model.basis").get<int>();
  m.basis.seed = field(b, "seed", "model.basis").get<std::uint64_t>();
  m.basis.freqs = mat_from_json(field(b, "freqs", "model.basis"), "model.basis.freqs");
  if (m.basis.freqs.rows() != m.basis.pairs() || m.basis.freqs.cols() != m.basis.d) {
    throw std::invalid_argument("model.basis: freqs shape does not match d and m");
  }
  const json& dom = field(j, "domain", what);
  require_keys(dom, {"lo", "hi"}, "model.domain");
  m.domain = Domain(vec_from_json(field(dom, "lo", "model.domain"), "model.domain.lo"),
                    vec_from_json(field(dom, "hi", "model.domain"), "model.domain.hi"));
  const json& g = field(j, "grid", what);
  const std::string kind = field(g, "kind", "model.grid").get<std::string>();
  if (kind == "tensor") {
    require_keys(g, {"kind", "points_per_axis"}, "model.grid");
    m.grid_kind = GridKind::tensor;
    m.points_per_axis = field(g, "points_per_axis", "model.grid").get<int>();
  } else if (kind == "monte-carlo") {
    require_keys(g, {"kind", "nodes", "seed"}, "model.grid");
    m.grid_kind = GridKind::monte_carlo;
    m.mc_nodes = field(g, "nodes", "model.grid").get<int>();
    m.mc_seed = field(g, "seed", "model.grid").get<std::uint64_t>();
  } else {
    throw std::invalid_argument("model.grid: unknown kind '" + kind + "'");
  }
  const json& pre = field(j, "preprocess", what);
  require_keys(pre, {"pca", "standardizer"}, "model.preprocess");
  if (pre.contains("pca") && !pre["pca"].is_null()) {
    require_keys(pre["pca"], {"mean", "components"}, "model.preprocess.pca");
    m.pca = PcaModel{vec_from_json(field(pre["pca"], "mean", "pca"), "pca.mean"),
                     mat_from_json(field(pre["pca"], "components", "pca"), "pca.components")};
  }
  if (pre.contains("standardizer") && !pre["standardizer"].is_null()) {
    const json& s = pre["standardizer"];
    require_keys(s, {"mean", "scale"}, "model.preprocess.standardizer");
    m.standardizer = Standardizer{vec_from_json(field(s, "mean", "standardizer"), "standardizer.mean"),
                                  vec_from_json(field(s, "scale", "standardizer"), "standardizer.scale")};
  }
  m.solver = field(j, "solver", what).get<std::string>();
  const json& bags = field(j, "bags", what);
  const auto n = static_cast<Eigen::Index>(bags.size());
  m.lambda.data.resize(m.basis.m, n);
  m.mean_phi.resize(m.basis.m, n);
  m.log_partition.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& e = bags[static_cast<std::size_t>(i)];
    require_keys(e, {"bag_id", "lambda", "logZ", "mean_phi"}, "model.bags");
    m.lambda.bag_ids.push_back(field(e, "bag_id", "model.bags").get<std::string>());
    Vec l = vec_from_json(field(e, "lambda", "model.bags"), "model.bags.lambda");
    Vec mp = vec_from_json(field(e, "mean_phi", "model.bags"), "model.bags.mean_phi");
    if (l.size() != m.basis.m || mp.size() != m.basis.m) {
      throw std::invalid_argument("model.bags: vector length does not match m");
    }
    m.lambda.data.col(i) = l;
    m.mean_phi.col(i) = mp;
    m.log_partition(i) = field(e, "logZ", "model.bags").get<double>();
  }
  m.lambda.validate();
  return m;
}

void write_matrix_csv(std::ostream& out, const Mat& m, const std::vector<std::string>& ids) {
  if (m.rows() != static_cast<Eigen::Index>(ids.size()) || m.cols() != m.rows()) {
    throw std::invalid_argument("write_matrix_csv: matrix must be square with one id per row");
  }
  out << "bag_id";
  for (const auto& id : ids) out << ',' << csv_field(id);
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << csv_field(ids[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << format_double(m(r, c));
    out << '\n';
  }
}

void write_predictions_jsonl(std::ostream& out, const std::vector<Prediction>& preds) {
  for (const auto& p : preds) {
    out << json{{"bag_id", p.bag_id}, {"true", p.truth}, {"predicted", p.predicted}}.dump()
        << '\n';
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    // Byte offset to line number.
    const std::string text = buf.str();
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(
                                     std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    throw ParseError(path, line, std::string("malformed JSON: ") + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace maxentmil
