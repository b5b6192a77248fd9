#include "maxentmil/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "maxentmil/error.hpp"
#include "maxentmil/parallel.hpp"

namespace maxentmil {
namespace {

namespace fs = std::filesystem;

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config " + path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config " + path_ + "." + key + ": wrong type");
    }
  }

  /// Nested object; `body` is called only when the key is present.
  template <class F>
  void section(const char* key, F&& body) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    Section sub(*it, path_ + "." + key);
    body(sub);
    sub.done();
  }

  void ignore(const char* key) { seen_.insert(key); }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw std::invalid_argument("config " + path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void log(const RunConfig& cfg, const std::string& msg) {
  if (cfg.verbosity > 0) std::cerr << msg << '\n';
}

void prepare_dir(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("an output directory is required (--out)");
  fs::create_directories(dir);
}

void write_resolved(const RunConfig& cfg, const std::string& dir, const std::string& command) {
  json j = to_json(cfg);
  j["command"] = command;
  j["version"] = kVersion;
  write_text_file((fs::path(dir) / "resolved_config.json").string(), dump(j));
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

template <class F>
std::string to_text(F&& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

IntegrationGrid grid_for(const RunConfig& cfg, const Domain& domain) {
  return domain.dim() <= 3 ? make_tensor_grid(domain, cfg.points_per_axis)
                           : make_mc_grid(domain, cfg.mc_nodes, cfg.mc_seed);
}

int rank_of(const Mat& x) {
  if (x.size() == 0 || x.isZero(0.0)) return 0;
  const Vec s = svd(x).S;
  return numeric_rank(x, 1e-8 * std::max(1.0, s(0)));
}

json cells_to_json(const std::vector<PhaseCell>& cells) {
  json arr = json::array();
  for (const auto& c : cells) arr.push_back(to_json(c));
  return arr;
}

std::string phase_csv(const std::vector<PhaseCell>& cells) {
  std::ostringstream out;
  out << "m,T,recovery_probability,threshold,ranks,warnings\n";
  for (const auto& c : cells) {
    out << c.m << ',' << c.T << ',' << format_double(c.recovery_probability) << ','
        << format_double(c.threshold) << ',';
    for (std::size_t r = 0; r < c.ranks.size(); ++r) out << (r ? ";" : "") << c.ranks[r];
    int w = 0;
    for (bool b : c.warnings) w += b ? 1 : 0;
    out << ',' << w << '\n';
  }
  return out.str();
}

}  // namespace

// --- configuration -----------------------------------------------------------

void RunConfig::validate() const {
  if (m < 2 || m % 2 != 0) throw std::invalid_argument("config basis.m must be even and >= 2");
  if (points_per_axis < 1 || mc_nodes < 1) throw std::invalid_argument("config grid sizes must be >= 1");
  if (!(margin >= 0)) throw std::invalid_argument("config grid.margin must be >= 0");
  if (pca_dims < 0) throw std::invalid_argument("config preprocess.pca_dims must be >= 0");
  static const std::set<std::string> fit_solvers{"mde", "cmen", "rmde", "rmde-continuation",
                                                 "rmde-cv"};
  if (!fit_solvers.count(fit.solver))
    throw std::invalid_argument("config fit.solver: unknown solver '" + fit.solver + "'");
  if (!(fit.eta > 0)) throw std::invalid_argument("config fit.eta must be > 0");
  if (fit.etas.empty()) throw std::invalid_argument("config fit.etas must be nonempty");
  for (double e : fit.etas)
    if (!(e > 0)) throw std::invalid_argument("config fit.etas must be > 0");
  cmen.validate();
  rmde.validate();
  newton.validate();
  knn.validate();
  if (phase.solver != "both") phase_solver_from_string(phase.solver);
  phase_spec().validate();
  if (markov.trials < 50) throw std::invalid_argument("config markov.trials must be >= 50");
  if (markov.a_values.empty()) throw std::invalid_argument("config markov.a_values must be nonempty");
  bag_distance_from_string(classify.distance);
  if (classify.folds < 2) throw std::invalid_argument("config classify.folds must be >= 2");
  if (!(classify.gamma > 0)) throw std::invalid_argument("config classify.gamma must be > 0");
  synth.validate();
  if (synth_format != "jsonl" && synth_format != "csv")
    throw std::invalid_argument("config synth.format must be jsonl or csv");
  if (bench.repeats < 1) throw std::invalid_argument("config bench.repeats must be >= 1");
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.distance = bag_distance_from_string(classify.distance);
  p.pca_dims = pca_dims;
  p.m = m;
  p.basis_seed = basis_seed;
  p.margin = margin;
  p.points_per_axis = points_per_axis;
  p.mc_nodes = mc_nodes;
  p.mc_seed = mc_seed;
  p.knn = knn;
  p.cmen = cmen;
  p.rmde = rmde;
  p.newton = newton;
  return p;
}

PhaseDiagramSpec RunConfig::phase_spec() const {
  PhaseDiagramSpec s;
  s.N = phase.N;
  s.m_values = phase.m_values;
  s.T_values = phase.T_values;
  s.n_per_bag = phase.n_per_bag;
  s.reps = phase.reps;
  s.base_seed = seed;
  s.solver = phase.solver == "both" ? PhaseSolver::cmen : phase_solver_from_string(phase.solver);
  s.d = phase.d;
  s.half_width = phase.half_width;
  s.points_per_axis = points_per_axis;
  s.scale_exponent = phase.scale_exponent;
  s.cmen = cmen;
  s.rmde = rmde;
  s.newton = newton;
  return s;
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["verbosity"] = c.verbosity;
  j["basis"] = {{"m", c.m}, {"seed", c.basis_seed}};
  j["grid"] = {{"points_per_axis", c.points_per_axis},
               {"mc_nodes", c.mc_nodes},
               {"mc_seed", c.mc_seed},
               {"margin", c.margin}};
  j["preprocess"] = {{"pca_dims", c.pca_dims}, {"standardize", c.standardize}};
  j["fit"] = {{"solver", c.fit.solver}, {"eta", c.fit.eta}, {"etas", c.fit.etas}};
  j["cmen"] = {{"a", c.cmen.a},
               {"max_outer", c.cmen.max_outer},
               {"max_inner", c.cmen.max_inner},
               {"obj_tol", c.cmen.obj_tol},
               {"inner_precision", c.cmen.inner_precision},
               {"cons_tol", c.cmen.cons_tol},
               {"ls_alpha", c.cmen.ls_alpha},
               {"tau_floor", c.cmen.tau_floor},
               {"z_lo", c.cmen.z_lo},
               {"z_hi_init", c.cmen.z_hi_init},
               {"warm_start", c.cmen.warm_start}};
  j["rmde"] = {{"max_iters", c.rmde.max_iters},
               {"tol", c.rmde.tol},
               {"ls_alpha", c.rmde.ls_alpha},
               {"tau_floor", c.rmde.tau_floor}};
  j["newton"] = {{"max_iters", c.newton.max_iters},
                 {"grad_tol", c.newton.grad_tol},
                 {"armijo_c", c.newton.armijo_c},
                 {"backtrack_rho", c.newton.backtrack_rho},
                 {"hessian_ridge", c.newton.hessian_ridge}};
  j["knn"] = {{"k", c.knn.k}, {"k_prime", c.knn.k_prime}};
  j["phase"] = {{"N", c.phase.N},
                {"m_values", c.phase.m_values},
                {"T_values", c.phase.T_values},
                {"n_per_bag", c.phase.n_per_bag},
                {"reps", c.phase.reps},
                {"solver", c.phase.solver},
                {"d", c.phase.d},
                {"half_width", c.phase.half_width},
                {"scale_exponent", c.phase.scale_exponent}};
  j["markov"] = {{"N", c.markov.N},
                 {"m", c.markov.m},
                 {"n", c.markov.n},
                 {"trials", c.markov.trials},
                 {"a_values", c.markov.a_values},
                 {"half_width", c.markov.half_width}};
  j["classify"] = {{"distance", c.classify.distance},
                   {"folds", c.classify.folds},
                   {"gamma", c.classify.gamma},
                   {"export_kernel", c.classify.export_kernel}};
  j["synth"] = {{"kind", to_string(c.synth.kind)},
                {"bags", c.synth.bags},
                {"m", c.synth.m},
                {"T", c.synth.T},
                {"n_per_bag", c.synth.n_per_bag},
                {"d", c.synth.d},
                {"half_width", c.synth.half_width},
                {"scale_exponent", c.synth.scale_exponent},
                {"spread", c.synth.spread},
                {"format", c.synth_format}};
  j["bench"] = {{"m", c.bench.m},
                {"d", c.bench.d},
                {"n_stats", c.bench.n_stats},
                {"kl_bags", c.bench.kl_bags},
                {"n_kl", c.bench.n_kl},
                {"n_hausdorff", c.bench.n_hausdorff},
                {"repeats", c.bench.repeats}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.ignore("version");
  root.ignore("command");
  root.get("seed", c.seed);
  root.get("verbosity", c.verbosity);
  root.section("basis", [&](Section& s) {
    s.get("m", c.m);
    s.get("seed", c.basis_seed);
  });
  root.section("grid", [&](Section& s) {
    s.get("points_per_axis", c.points_per_axis);
    s.get("mc_nodes", c.mc_nodes);
    s.get("mc_seed", c.mc_seed);
    s.get("margin", c.margin);
  });
  root.section("preprocess", [&](Section& s) {
    s.get("pca_dims", c.pca_dims);
    s.get("standardize", c.standardize);
  });
  root.section("fit", [&](Section& s) {
    s.get("solver", c.fit.solver);
    s.get("eta", c.fit.eta);
    s.get("etas", c.fit.etas);
  });
  root.section("cmen", [&](Section& s) {
    s.get("a", c.cmen.a);
    s.get("max_outer", c.cmen.max_outer);
    s.get("max_inner", c.cmen.max_inner);
    s.get("obj_tol", c.cmen.obj_tol);
    s.get("inner_precision", c.cmen.inner_precision);
    s.get("cons_tol", c.cmen.cons_tol);
    s.get("ls_alpha", c.cmen.ls_alpha);
    s.get("tau_floor", c.cmen.tau_floor);
    s.get("z_lo", c.cmen.z_lo);
    s.get("z_hi_init", c.cmen.z_hi_init);
    s.get("warm_start", c.cmen.warm_start);
  });
  root.section("rmde", [&](Section& s) {
    s.get("max_iters", c.rmde.max_iters);
    s.get("tol", c.rmde.tol);
    s.get("ls_alpha", c.rmde.ls_alpha);
    s.get("tau_floor", c.rmde.tau_floor);
  });
  root.section("newton", [&](Section& s) {
    s.get("max_iters", c.newton.max_iters);
    s.get("grad_tol", c.newton.grad_tol);
    s.get("armijo_c", c.newton.armijo_c);
    s.get("backtrack_rho", c.newton.backtrack_rho);
    s.get("hessian_ridge", c.newton.hessian_ridge);
  });
  root.section("knn", [&](Section& s) {
    s.get("k", c.knn.k);
    s.get("k_prime", c.knn.k_prime);
  });
  root.section("phase", [&](Section& s) {
    s.get("N", c.phase.N);
    s.get("m_values", c.phase.m_values);
    s.get("T_values", c.phase.T_values);
    s.get("n_per_bag", c.phase.n_per_bag);
    s.get("reps", c.phase.reps);
    s.get("solver", c.phase.solver);
    s.get("d", c.phase.d);
    s.get("half_width", c.phase.half_width);
    s.get("scale_exponent", c.phase.scale_exponent);
  });
  root.section("markov", [&](Section& s) {
    s.get("N", c.markov.N);
    s.get("m", c.markov.m);
    s.get("n", c.markov.n);
    s.get("trials", c.markov.trials);
    s.get("a_values", c.markov.a_values);
    s.get("half_width", c.markov.half_width);
  });
  root.section("classify", [&](Section& s) {
    s.get("distance", c.classify.distance);
    s.get("folds", c.classify.folds);
    s.get("gamma", c.classify.gamma);
    s.get("export_kernel", c.classify.export_kernel);
  });
  root.section("synth", [&](Section& s) {
    std::string kind = to_string(c.synth.kind);
    s.get("kind", kind);
    c.synth.kind = synth_kind_from_string(kind);
    s.get("bags", c.synth.bags);
    s.get("m", c.synth.m);
    s.get("T", c.synth.T);
    s.get("n_per_bag", c.synth.n_per_bag);
    s.get("d", c.synth.d);
    s.get("half_width", c.synth.half_width);
    s.get("scale_exponent", c.synth.scale_exponent);
    s.get("spread", c.synth.spread);
    s.get("format", c.synth_format);
  });
  root.section("bench", [&](Section& s) {
    s.get("m", c.bench.m);
    s.get("d", c.bench.d);
    s.get("n_stats", c.bench.n_stats);
    s.get("kl_bags", c.bench.kl_bags);
    s.get("n_kl", c.bench.n_kl);
    s.get("n_hausdorff", c.bench.n_hausdorff);
    s.get("repeats", c.bench.repeats);
  });
  root.done();
  return c;
}

// --- commands ----------------------------------------------------------------

int cmd_fit(const RunConfig& cfg, const std::string& data_path, const std::string& out_dir) {
  cfg.validate();
  const LabeledBagDataset raw = read_dataset(data_path);
  prepare_dir(out_dir);
  write_resolved(cfg, out_dir, "fit");

  Model model;
  LabeledBagDataset ds = raw;
  if (cfg.pca_dims > 0) {
    model.pca = pca_fit(pooled_instances(ds), cfg.pca_dims);
    ds = pca_apply(*model.pca, ds);
  }
  if (cfg.standardize) {
    model.standardizer = standardizer_fit(pooled_instances(ds));
    ds = standardize(*model.standardizer, ds);
  }
  model.domain = domain_from_data(pooled_instances(ds), cfg.margin);
  const IntegrationGrid grid = grid_for(cfg, model.domain);
  model.grid_kind = grid.kind;
  model.points_per_axis = cfg.points_per_axis;
  model.mc_nodes = cfg.mc_nodes;
  model.mc_seed = cfg.mc_seed;
  model.basis = make_basis(ds.d(), cfg.m, cfg.basis_seed);
  const Quadrature quad(model.basis, grid);

  std::vector<SufficientStats> stats;
  for (const auto& b : ds.bags) stats.push_back(suff_stats(b.instances, model.basis, b.bag_id));
  log(cfg, "fit: " + std::to_string(stats.size()) + " bags, m = " + std::to_string(cfg.m));

  const LambdaMatrix hat = fit_mde(stats, quad, cfg.newton);
  SolverResult res;
  if (cfg.fit.solver == "mde") {
    res.lambda = hat;
    res.report.solver = "mde";
  } else if (cfg.fit.solver == "cmen") {
    res = fit_cmen(stats, quad, hat, cfg.cmen);
  } else if (cfg.fit.solver == "rmde") {
    res = fit_rmde(stats, quad, cfg.fit.eta, hat, cfg.rmde);
  } else if (cfg.fit.solver == "rmde-continuation") {
    res = rmde_continuation(stats, quad, hat, cfg.rmde);
  } else {
    res = rmde_cross_validate(stats, quad, cfg.fit.etas, derive_seed(cfg.seed, {4}), cfg.rmde,
                              cfg.newton)
              .refit;
  }
  model.solver = cfg.fit.solver;
  model.lambda = res.lambda;
  model.mean_phi.resize(quad.m(), res.lambda.bags());
  model.log_partition = quad.log_partition_batch(res.lambda.data, &model.mean_phi);

  json report = to_json(res.report);
  report["rank"] = rank_of(res.lambda.data);
  write_text_file(path_in(out_dir, "model.json"), dump(to_json(model)));
  write_text_file(path_in(out_dir, "report.json"), dump(report));
  write_text_file(path_in(out_dir, "stats.jsonl"),
                  to_text([&](std::ostream& o) { write_stats_jsonl(o, stats); }));
  if (res.report.warning) {
    std::cerr << "warning: " << res.report.warning_message << '\n';
    return kExitWarning;
  }
  return kExitOk;
}

int cmd_phase_diagram(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  prepare_dir(out_dir);
  write_resolved(cfg, out_dir, "phase-diagram");
  const PhaseDiagramSpec spec = cfg.phase_spec();
  std::vector<PhaseSolver> solvers;
  if (cfg.phase.solver == "both")
    solvers = {PhaseSolver::cmen, PhaseSolver::rmde_continuation};
  else
    solvers = {spec.solver};

  // A cell file is reused only when it was produced by the same settings.
  json key = to_json(cfg);
  key.erase("verbosity");
  for (const char* unused : {"fit", "markov", "classify", "synth", "bench", "knn", "preprocess"})
    key.erase(unused);

  const fs::path cell_dir = fs::path(out_dir) / "cells";
  fs::create_directories(cell_dir);
  std::vector<std::vector<PhaseCell>> grid(solvers.size());
  for (int m : spec.m_values) {
    for (int T : spec.T_values) {
      const fs::path file = cell_dir / ("m" + std::to_string(m) + "_T" + std::to_string(T) + ".json");
      std::vector<PhaseCell> cells;
      if (fs::exists(file)) {
        try {
          const json saved = read_json_file(file.string());
          if (saved.at("key") == key) {
            for (PhaseSolver s : solvers)
              cells.push_back(phase_cell_from_json(saved.at("cells").at(to_string(s))));
          }
        } catch (const std::exception&) {
          cells.clear();
        }
      }
      if (cells.size() == solvers.size()) {
        log(cfg, "phase-diagram: reusing " + file.string());
      } else {
        log(cfg, "phase-diagram: cell m=" + std::to_string(m) + " T=" + std::to_string(T));
        cells = run_phase_cell(spec, m, T, solvers);
        json saved;
        saved["key"] = key;
        saved["cells"] = json::object();
        for (std::size_t s = 0; s < solvers.size(); ++s)
          saved["cells"][to_string(solvers[s])] = to_json(cells[s]);
        // Write then rename so an interrupted run never leaves a partial cell.
        const fs::path tmp = file.string() + ".tmp";
        write_text_file(tmp.string(), dump(saved));
        fs::rename(tmp, file);
      }
      for (std::size_t s = 0; s < solvers.size(); ++s) grid[s].push_back(cells[s]);
    }
  }
  for (std::size_t s = 0; s < solvers.size(); ++s) {
    const std::string name = to_string(solvers[s]);
    json out;
    out["solver"] = name;
    out["m_values"] = spec.m_values;
    out["T_values"] = spec.T_values;
    out["cells"] = cells_to_json(grid[s]);
    write_text_file(path_in(out_dir, "phase_" + name + ".json"), dump(out));
    write_text_file(path_in(out_dir, "phase_" + name + ".csv"), phase_csv(grid[s]));
  }
  return kExitOk;
}

int cmd_kl_matrix(const RunConfig& cfg, const std::string& model_path,
                  const std::string& out_dir) {
  cfg.validate();
  const Model model = model_from_json(read_json_file(model_path));
  prepare_dir(out_dir);
  write_resolved(cfg, out_dir, "kl-matrix");
  const auto dens = model.densities();
  const Mat d = pairwise_distances(dens.size(), [&](std::size_t i, std::size_t j) {
    return std::max(0.0, sym_kl(dens[i], dens[j]));
  });
  write_text_file(path_in(out_dir, "kl_matrix.csv"),
                  to_text([&](std::ostream& o) { write_matrix_csv(o, d, model.lambda.bag_ids); }));
  if (cfg.classify.export_kernel) {
    write_text_file(path_in(out_dir, "kernel.csv"), to_text([&](std::ostream& o) {
                      write_matrix_csv(o, kernel_matrix(d, cfg.classify.gamma),
                                       model.lambda.bag_ids);
                    }));
  }
  return kExitOk;
}

int cmd_classify(const RunConfig& cfg, const std::string& train_path,
                 const std::string& test_path, const std::string& out_dir) {
  cfg.validate();
  const LabeledBagDataset train = read_dataset(train_path);
  const LabeledBagDataset test = test_path.empty() ? LabeledBagDataset{} : read_dataset(test_path);
  prepare_dir(out_dir);
  write_resolved(cfg, out_dir, "classify");
  const PipelineConfig pipe = cfg.pipeline();

  json summary;
  summary["distance"] = cfg.classify.distance;
  std::vector<std::string> warnings;
  std::vector<Prediction> predictions;
  if (test_path.empty()) {
    const KfoldResult r = kfold_evaluate(train, cfg.classify.folds, pipe, cfg.seed);
    summary["mode"] = "kfold";
    summary["folds"] = cfg.classify.folds;
    summary["mean_accuracy"] = r.mean_accuracy;
    summary["std_accuracy"] = r.std_accuracy;
    summary["fold_accuracy"] = r.fold_accuracy;
    predictions = r.predictions;
    warnings = r.warnings;
  } else {
    const ClassificationResult r = classify(train, test, pipe);
    summary["mode"] = "train-test";
    summary["accuracy"] = r.accuracy;
    predictions = r.predictions;
    warnings = r.warnings;
  }
  summary["warnings"] = warnings;
  write_text_file(path_in(out_dir, "summary.json"), dump(summary));
  write_text_file(path_in(out_dir, "predictions.jsonl"),
                  to_text([&](std::ostream& o) { write_predictions_jsonl(o, predictions); }));
  if (cfg.classify.export_kernel) {
    const FoldDistances fd = fold_distances(train, LabeledBagDataset{}, pipe);
    std::vector<std::string> ids;
    for (const auto& b : train.bags) ids.push_back(b.bag_id);
    write_text_file(path_in(out_dir, "distances.csv"),
                    to_text([&](std::ostream& o) { write_matrix_csv(o, fd.train, ids); }));
    write_text_file(path_in(out_dir, "kernel.csv"), to_text([&](std::ostream& o) {
                      write_matrix_csv(o, kernel_matrix(fd.train, cfg.classify.gamma), ids);
                    }));
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return warnings.empty() ? kExitOk : kExitWarning;
}

int cmd_bound_check(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  prepare_dir(out_dir);
  write_resolved(cfg, out_dir, "bound-check");
  const MarkovSection& mk = cfg.markov;
  const MarkovTrialResult r =
      markov_bound_trial(mk.N, mk.m, mk.n, mk.trials, mk.a_values, cfg.seed, mk.half_width);
  json out;
  out["N"] = mk.N;
  out["m"] = mk.m;
  out["n"] = mk.n;
  out["trials"] = mk.trials;
  out["failed_trials"] = r.failed_trials;
  json rows = json::array();
  std::ostringstream csv;
  csv << "a,epsilon,exceedance,markov_limit\n";
  for (std::size_t i = 0; i < r.a_values.size(); ++i) {
    const double a = r.a_values[i];
    const double eps = epsilon_bound(mk.N, mk.m, a);
    rows.push_back({{"a", a}, {"epsilon", eps}, {"exceedance", r.exceedance[i]},
                    {"markov_limit", 1.0 / a}});
    csv << format_double(a) << ',' << format_double(eps) << ',' << format_double(r.exceedance[i])
        << ',' << format_double(1.0 / a) << '\n';
  }
  out["rows"] = rows;
  json div = json::array();
  for (double v : r.divergences) div.push_back(std::isnan(v) ? json(nullptr) : json(v));
  out["divergences"] = div;
  write_text_file(path_in(out_dir, "bound.json"), dump(out));
  write_text_file(path_in(out_dir, "bound.csv"), csv.str());
  return r.failed_trials > 0 ? kExitWarning : kExitOk;
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  prepare_dir(out_dir);
  write_resolved(cfg, out_dir, "synth");
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  const SynthDataset s = synth_dataset(sc);
  if (cfg.synth_format == "csv") {
    write_text_file(path_in(out_dir, "dataset.csv"),
                    to_text([&](std::ostream& o) { write_dataset_csv(o, s.data); }));
  } else {
    write_text_file(path_in(out_dir, "dataset.jsonl"),
                    to_text([&](std::ostream& o) { write_dataset_jsonl(o, s.data); }));
  }
  json truth;
  truth["kind"] = to_string(sc.kind);
  truth["basis"] = {{"d", s.basis.d}, {"m", s.basis.m}, {"seed", s.basis.seed},
                    {"freqs", to_json(s.basis.freqs)}};
  truth["domain"] = {{"lo", to_json(s.domain.lo())}, {"hi", to_json(s.domain.hi())}};
  truth["bag_ids"] = s.truth.bag_ids;
  truth["lambda"] = to_json(s.truth.data);
  write_text_file(path_in(out_dir, "truth.json"), dump(truth));
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  prepare_dir(out_dir);
  write_resolved(cfg, out_dir, "bench");
  BenchmarkConfig bc = cfg.bench;
  bc.seed = cfg.seed;
  const auto rows = runtime_benchmark(bc);
  json out = json::array();
  std::ostringstream csv;
  csv << "operation,n_small,n_large,seconds_small,seconds_large,ratio\n";
  for (const auto& r : rows) {
    out.push_back(to_json(r));
    csv << r.operation << ',' << r.n_small << ',' << r.n_large << ','
        << format_double(r.seconds_small) << ',' << format_double(r.seconds_large) << ','
        << format_double(r.ratio()) << '\n';
  }
  write_text_file(path_in(out_dir, "bench.json"), dump(out));
  write_text_file(path_in(out_dir, "bench.csv"), csv.str());
  return kExitOk;
}

// --- argument parsing --------------------------------------------------------

int run_cli(int argc, char** argv) {
  CLI::App app{"Maximum-entropy density estimation for multi-instance data"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int threads = 0;
  std::uint64_t seed = 0;
  int verbose = 0;
  app.add_option("--config", config_path, "JSON config file; unknown keys are errors")
      ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Root seed for every random stream");
  app.add_option("--threads", threads,
                 "Worker threads (default: MAXENTMIL_THREADS, else all cores)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");

  auto out_option = [&](CLI::App* sub) {
    sub->add_option("-o,--out", out_dir, "Output directory")->required();
  };

  // Overrides are applied after the config file is loaded.
  std::vector<std::function<void(RunConfig&)>> overrides;
  auto override_opt = [&](CLI::App* sub, const std::string& name, auto& var,
                          const std::string& help, auto apply) {
    auto* opt = sub->add_option(name, var, help);
    overrides.push_back([opt, apply, &var](RunConfig& c) {
      if (opt->count() > 0) apply(c, var);
    });
    return opt;
  };

  std::string data_path, model_path, train_path, test_path;
  std::string s_solver, s_distance, s_kind, s_format;
  int i_m = 0, i_reps = 0, i_n = 0, i_folds = 0, i_k = 0, i_kp = 0, i_pca = 0, i_trials = 0,
      i_bags = 0, i_repeats = 0;
  double d_eta = 0, d_gamma = 0;
  std::vector<int> v_m, v_T;
  bool export_kernel = false;

  auto* fit = app.add_subcommand("fit", "Fit one density per bag and write model.json and report.json");
  fit->add_option("data", data_path, "Dataset (.jsonl or .csv)")->required()->check(CLI::ExistingFile);
  out_option(fit);
  override_opt(fit, "--solver", s_solver, "mde | cmen | rmde | rmde-continuation | rmde-cv",
               [](RunConfig& c, const std::string& v) { c.fit.solver = v; });
  override_opt(fit, "--m", i_m, "Number of basis functions (even)",
               [](RunConfig& c, int v) { c.m = v; });
  override_opt(fit, "--eta", d_eta, "Penalty weight for --solver rmde",
               [](RunConfig& c, double v) { c.fit.eta = v; });
  override_opt(fit, "--pca-dims", i_pca, "PCA output dimension (0 = off)",
               [](RunConfig& c, int v) { c.pca_dims = v; });

  auto* phase = app.add_subcommand("phase-diagram", "Exact-rank recovery grid over (m, T); resumable");
  out_option(phase);
  override_opt(phase, "--solver", s_solver, "cmen | rmde-continuation | rmde-cv | both",
               [](RunConfig& c, const std::string& v) { c.phase.solver = v; });
  override_opt(phase, "--reps", i_reps, "Repetitions per cell",
               [](RunConfig& c, int v) { c.phase.reps = v; });
  override_opt(phase, "--n", i_n, "Instances per bag",
               [](RunConfig& c, int v) { c.phase.n_per_bag = v; });
  override_opt(phase, "--m-values", v_m, "Basis sizes",
               [](RunConfig& c, const std::vector<int>& v) { c.phase.m_values = v; });
  override_opt(phase, "--T-values", v_T, "True ranks",
               [](RunConfig& c, const std::vector<int>& v) { c.phase.T_values = v; });

  auto* klm = app.add_subcommand("kl-matrix", "Pairwise symmetric KL matrix of a fitted model");
  klm->add_option("model", model_path, "model.json from fit")->required()->check(CLI::ExistingFile);
  out_option(klm);
  override_opt(klm, "--gamma", d_gamma, "Also write kernel.csv = exp(-gamma D)",
               [](RunConfig& c, double v) {
                 c.classify.gamma = v;
                 c.classify.export_kernel = true;
               });

  auto* cls = app.add_subcommand("classify", "Citation-kNN; k-fold evaluation without --test");
  cls->add_option("train", train_path, "Labeled dataset")->required()->check(CLI::ExistingFile);
  cls->add_option("--test", test_path, "Held-out dataset")->check(CLI::ExistingFile);
  out_option(cls);
  override_opt(cls, "--distance", s_distance, "kl-mde | kl-cmen | kl-rmde | kl-kde | hausdorff",
               [](RunConfig& c, const std::string& v) { c.classify.distance = v; });
  override_opt(cls, "--folds", i_folds, "Number of folds",
               [](RunConfig& c, int v) { c.classify.folds = v; });
  override_opt(cls, "--k", i_k, "References", [](RunConfig& c, int v) { c.knn.k = v; });
  override_opt(cls, "--k-prime", i_kp, "Citer rank", [](RunConfig& c, int v) { c.knn.k_prime = v; });
  override_opt(cls, "--pca-dims", i_pca, "PCA output dimension (0 = off)",
               [](RunConfig& c, int v) { c.pca_dims = v; });
  override_opt(cls, "--m", i_m, "Number of basis functions (even)",
               [](RunConfig& c, int v) { c.m = v; });
  override_opt(cls, "--gamma", d_gamma, "Kernel exp(-gamma D) for --export-kernel",
               [](RunConfig& c, double v) { c.classify.gamma = v; });
  cls->add_flag("--export-kernel", export_kernel, "Write distances.csv and kernel.csv for the train bags");

  auto* bound = app.add_subcommand("bound-check", "Monte Carlo check of the KL confidence radius");
  out_option(bound);
  override_opt(bound, "--trials", i_trials, "Number of trials (>= 50)",
               [](RunConfig& c, int v) { c.markov.trials = v; });

  auto* syn = app.add_subcommand("synth", "Write a synthetic bag dataset and its true parameters");
  out_option(syn);
  override_opt(syn, "--kind", s_kind, "lowrank | two-class",
               [](RunConfig& c, const std::string& v) { c.synth.kind = synth_kind_from_string(v); });
  override_opt(syn, "--bags", i_bags, "Number of bags", [](RunConfig& c, int v) { c.synth.bags = v; });
  override_opt(syn, "--n", i_n, "Instances per bag",
               [](RunConfig& c, int v) { c.synth.n_per_bag = v; });
  override_opt(syn, "--format", s_format, "jsonl | csv",
               [](RunConfig& c, const std::string& v) { c.synth_format = v; });

  auto* bench = app.add_subcommand("bench", "Timing ratios under a doubling of bag size");
  out_option(bench);
  override_opt(bench, "--repeats", i_repeats, "Timed runs per measurement (minimum is kept)",
               [](RunConfig& c, int v) { c.bench.repeats = v; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{}
                                        : run_config_from_json(read_json_file(config_path));
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (verbose > 0) cfg.verbosity = verbose;
    for (auto& apply : overrides) apply(cfg);
    if (export_kernel) cfg.classify.export_kernel = true;
    if (threads > 0) set_thread_count(threads);

    if (fit->parsed()) return cmd_fit(cfg, data_path, out_dir);
    if (phase->parsed()) return cmd_phase_diagram(cfg, out_dir);
    if (klm->parsed()) return cmd_kl_matrix(cfg, model_path, out_dir);
    if (cls->parsed()) return cmd_classify(cfg, train_path, test_path, out_dir);
    if (bound->parsed()) return cmd_bound_check(cfg, out_dir);
    if (syn->parsed()) return cmd_synth(cfg, out_dir);
    if (bench->parsed()) return cmd_bench(cfg, out_dir);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what();
    if (!e.failed_bags().empty()) {
      std::cerr << " (bags:";
      for (const auto& b : e.failed_bags()) std::cerr << ' ' << b;
      std::cerr << ')';
    }
    std::cerr << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

}  // namespace maxentmil
