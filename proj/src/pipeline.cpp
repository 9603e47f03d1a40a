#include "sparseproj/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sparseproj/io.hpp"
#include "sparseproj/rng.hpp"

namespace sparseproj {

using nlohmann::json;

namespace {

[[noreturn]] void config_fail(const std::string& msg) {
  throw StageError(ExitCode::kConfig, msg);
}

std::string penalty_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::kGroupLasso: return "gl";
    case PenaltyKind::kGroupScad: return "gscad";
    case PenaltyKind::kAdaptiveGroupLasso: return "agl";
  }
  return "gl";
}

PenaltyKind penalty_from_name(const std::string& name) {
  if (name == "gl") return PenaltyKind::kGroupLasso;
  if (name == "gscad") return PenaltyKind::kGroupScad;
  if (name == "agl") return PenaltyKind::kAdaptiveGroupLasso;
  config_fail("unknown penalty '" + name + "' (expected gl, gscad, or agl)");
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) config_fail("config key '" + key + "' must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) config_fail("config key '" + key + "' must be an integer");
  return v.get<int>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) config_fail("config key '" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) config_fail("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

void apply_config_key(RunConfig& c, const std::string& key, const json& v) {
  if (key == "mode") {
    c.mode = as_string(v, key);
  } else if (key == "x") {
    c.x_path = as_string(v, key);
  } else if (key == "y") {
    c.y_path = as_string(v, key);
  } else if (key == "groups") {
    c.groups_path = as_string(v, key);
  } else if (key == "penalty") {
    c.penalty = penalty_from_name(as_string(v, key));
  } else if (key == "lambda") {
    if (v.is_string()) {
      if (v.get<std::string>() != "cv")
        config_fail("config key 'lambda' must be \"cv\" or a positive number");
      c.lambda_cv = true;
      c.lambda = 0.0;
    } else {
      c.lambda_cv = false;
      c.lambda = as_double(v, key);
    }
  } else if (key == "tau") {
    c.tau = as_double(v, key);
  } else if (key == "size_scaled") {
    c.size_scaled = as_bool(v, key);
  } else if (key == "a_n") {
    c.a_n = as_double(v, key);
  } else if (key == "sigma") {
    if (v.is_string()) {
      if (v.get<std::string>() != "auto")
        config_fail("config key 'sigma' must be \"auto\" or a positive number");
      c.sigma = 0.0;
    } else {
      c.sigma = as_double(v, key);
    }
  } else if (key == "draws") {
    c.draws = as_int(v, key);
  } else if (key == "seed") {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<long long>() < 0))
      config_fail("config key 'seed' must be a nonnegative integer");
    c.seed = v.get<std::uint64_t>();
    c.seed_set = true;
  } else if (key == "folds") {
    c.folds = as_int(v, key);
  } else if (key == "grid_size") {
    c.grid_size = as_int(v, key);
  } else if (key == "grid_min_ratio") {
    c.grid_min_ratio = as_double(v, key);
  } else if (key == "nodewise_grid") {
    c.nodewise_grid = as_int(v, key);
  } else if (key == "nodewise_lambda") {
    c.nodewise_lambda = as_double(v, key);
  } else if (key == "debias") {
    c.debias = as_bool(v, key);
  } else if (key == "level") {
    c.level = as_double(v, key);
  } else if (key == "jobs") {
    c.jobs = as_int(v, key);
  } else if (key == "standardize") {
    c.standardize = as_bool(v, key);
  } else if (key == "center_y") {
    c.center_y = as_bool(v, key);
  } else if (key == "tol") {
    c.tol = as_double(v, key);
  } else if (key == "max_iter") {
    c.max_iter = as_int(v, key);
  } else if (key == "nodewise_tol") {
    c.nodewise_tol = as_double(v, key);
  } else if (key == "nodewise_max_iter") {
    c.nodewise_max_iter = as_int(v, key);
  } else if (key == "n_basis") {
    c.n_basis = as_int(v, key);
  } else if (key == "degree") {
    c.degree = as_int(v, key);
  } else if (key == "dump_draws") {
    c.dump_draws = as_bool(v, key);
  } else {
    config_fail("unknown config key '" + key + "'");
  }
}

json config_to_json(const RunConfig& c) {
  json j;
  j["mode"] = c.mode;
  j["x"] = c.x_path;
  j["y"] = c.y_path;
  j["groups"] = c.groups_path;
  j["penalty"] = penalty_name(c.penalty);
  if (c.lambda_cv)
    j["lambda"] = "cv";
  else
    j["lambda"] = c.lambda;
  j["tau"] = c.tau;
  j["size_scaled"] = c.size_scaled;
  j["a_n"] = c.a_n;
  if (c.sigma > 0.0)
    j["sigma"] = c.sigma;
  else
    j["sigma"] = "auto";
  j["draws"] = c.draws;
  j["seed"] = c.seed;
  j["folds"] = c.folds;
  j["grid_size"] = c.grid_size;
  j["grid_min_ratio"] = c.grid_min_ratio;
  j["nodewise_grid"] = c.nodewise_grid;
  j["nodewise_lambda"] = c.nodewise_lambda;
  j["debias"] = c.debias;
  j["level"] = c.level;
  j["jobs"] = c.jobs;
  j["standardize"] = c.standardize;
  j["center_y"] = c.center_y;
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  j["nodewise_tol"] = c.nodewise_tol;
  j["nodewise_max_iter"] = c.nodewise_max_iter;
  j["n_basis"] = c.n_basis;
  j["degree"] = c.degree;
  j["dump_draws"] = c.dump_draws;
  return j;
}

// Artifact headers are '#' comment lines; JSON readers drop them first.
std::string strip_hash_lines(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto a = line.find_first_not_of(" \t\r");
    if (a != std::string::npos && line[a] == '#') continue;
    out += line;
    out += '\n';
  }
  return out;
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(strip_hash_lines(text));
  } catch (const json::exception& e) {
    throw StageError(ExitCode::kIo, what + ": " + e.what());
  }
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json groups_to_json_1based(const std::vector<int>& groups) {
  json a = json::array();
  for (int g : groups) a.push_back(g + 1);
  return a;
}

std::vector<std::string> artifact_header(std::uint64_t seed, std::uint64_t hash) {
  return {"seed=" + std::to_string(seed), "config=" + hex64(hash)};
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw StageError(ExitCode::kIo, "cannot create output directory " + dir);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_with_header(const std::string& path, const std::vector<std::string>& header,
                       const std::string& body) {
  std::string s;
  for (const auto& h : header) s += "# " + h + "\n";
  s += body;
  write_text_file(path, s);
}

}  // namespace

bool log_enabled() {
  static const bool on = [] {
    const char* v = std::getenv("SPARSEPROJ_LOG");
    return v != nullptr && *v != '\0' && std::string(v) != "0";
  }();
  return on;
}

void log_stage(const std::string& stage, const std::string& msg) {
  if (!log_enabled()) return;
  std::fprintf(stderr, "[sparseproj] %s: %s\n", stage.c_str(), msg.c_str());
}

void RunConfig::validate() const {
  if (mode != "fit" && mode != "additive") config_fail("mode must be fit or additive");
  if (!seed_set) config_fail("a seed is required: pass --seed or a \"seed\" config entry");
  if (draws < 1) config_fail("draws must be >= 1");
  if (!lambda_cv && !(lambda > 0.0)) config_fail("a fixed lambda must be > 0");
  if (lambda_cv && folds < 2) config_fail("cross validation needs folds >= 2");
  if (lambda_cv && grid_size < 2) config_fail("cross validation needs grid_size >= 2");
  if (!(grid_min_ratio > 0.0 && grid_min_ratio < 1.0))
    config_fail("grid_min_ratio must be in (0, 1)");
  if (penalty == PenaltyKind::kGroupScad && !(tau > 2.0)) config_fail("tau must exceed 2");
  if (!(level > 0.0 && level < 1.0)) config_fail("level must be in (0, 1)");
  if (jobs < 1) config_fail("jobs must be >= 1");
  if (!(tol > 0.0)) config_fail("tol must be > 0");
  if (max_iter < 1) config_fail("max_iter must be >= 1");
  if (!(nodewise_tol > 0.0)) config_fail("nodewise_tol must be > 0");
  if (nodewise_max_iter < 1) config_fail("nodewise_max_iter must be >= 1");
  if (nodewise_grid < 2) config_fail("nodewise_grid must be >= 2");
  if (mode == "additive") {
    if (degree < 1) config_fail("degree must be >= 1");
    if (n_basis < degree + 1) config_fail("n_basis must be at least degree + 1");
  }
}

RunConfig config_from_json_text(const std::string& text) {
  const json j = parse_json_text(text, "config");
  if (!j.is_object()) config_fail("config must be a JSON object");
  // A report echoes its config; accept it directly.
  const json* obj = &j;
  if (j.contains("version") && j.contains("config") && j["config"].is_object())
    obj = &j["config"];
  RunConfig c;
  for (const auto& [key, val] : obj->items()) apply_config_key(c, key, val);
  return c;
}

std::string config_to_json_text(const RunConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(config_to_json_text(cfg));
}

RunResult run_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  const GroupSpec& spec, const RunConfig& cfg) {
  cfg.validate();
  if (x.rows() != y.size())
    config_fail("x has " + std::to_string(x.rows()) + " rows but y has " +
                std::to_string(y.size()));
  try {
    spec.validate(static_cast<int>(x.cols()));
  } catch (const std::invalid_argument& e) {
    config_fail(e.what());
  }

  RunResult r;
  r.spec = spec;
  const auto clock = [] { return std::chrono::steady_clock::now(); };
  const auto record = [&r, &clock](const std::string& stage, auto t0) {
    const double s = std::chrono::duration<double>(clock() - t0).count();
    r.timings[stage] = std::round(s * 1000.0) / 1000.0;
  };

  auto t0 = clock();
  log_stage("standardize", std::to_string(x.rows()) + " x " + std::to_string(x.cols()) +
                               ", " + std::to_string(spec.n_groups()) + " groups");
  GroupedDesign d = make_design(x, spec);
  if (cfg.standardize) d = standardize(d);
  const double ybar = cfg.center_y ? y.mean() : 0.0;
  const Eigen::VectorXd yc = y.array() - ybar;
  record("standardize", t0);

  t0 = clock();
  log_stage("posterior", "ridge posterior and " + std::to_string(cfg.draws) + " draws");
  RidgeConfig rcfg;
  rcfg.a_n = cfg.a_n;
  rcfg.sigma = cfg.sigma;
  const RidgePosterior post = fit_ridge_posterior(d, yc, rcfg);
  if (!post.mean.allFinite() || !std::isfinite(post.sigma) || !(post.sigma > 0.0))
    throw StageError(ExitCode::kPosterior, "posterior: ridge solution is not finite");
  Eigen::MatrixXd draws_std = sample_posterior(post, cfg.draws, cfg.seed);
  if (!draws_std.allFinite())
    throw StageError(ExitCode::kPosterior, "posterior: draws are not finite");
  record("posterior", t0);

  t0 = clock();
  SolveControl ctl;
  ctl.tol = cfg.tol;
  ctl.max_iter = cfg.max_iter;
  PenaltyConfig pen;
  pen.kind = cfg.penalty;
  pen.tau = cfg.tau;
  pen.size_scaled = cfg.size_scaled;
  bool pilot_converged = true;
  if (cfg.penalty == PenaltyKind::kAdaptiveGroupLasso) {
    log_stage("lambda", "pilot group lasso for adaptive weights");
    PenaltyConfig pilot_pen;
    pilot_pen.kind = PenaltyKind::kGroupLasso;
    pilot_pen.size_scaled = cfg.size_scaled;
    const CvResult pilot_cv = cross_validate_lambda(d, yc, pilot_pen, cfg.folds,
                                                    cfg.grid_size, cfg.grid_min_ratio,
                                                    cfg.seed, ctl);
    pilot_pen.lambda = pilot_cv.lambda;
    const SolveResult pilot = solve_penalized_ls(d, yc, pilot_pen, ctl);
    pilot_converged = pilot.converged;
    pen.weights = adaptive_weights(pilot.coef, d.spec);
  }
  if (cfg.lambda_cv) {
    log_stage("lambda", std::to_string(cfg.folds) + "-fold cross validation");
    const CvResult cv = cross_validate_lambda(d, yc, pen, cfg.folds, cfg.grid_size,
                                              cfg.grid_min_ratio, cfg.seed, ctl);
    pen.lambda = cv.lambda;
  } else {
    pen.lambda = cfg.lambda;
  }
  try {
    pen.validate(spec.n_groups());
  } catch (const std::invalid_argument& e) {
    config_fail(e.what());
  }
  r.lambda = pen.lambda;
  record("lambda", t0);

  t0 = clock();
  log_stage("projection", "lambda=" + format_double(pen.lambda) + ", projecting " +
                              std::to_string(cfg.draws) + " draws");
  const SolveResult point = solve_penalized_ls(d, yc, pen, ctl);
  std::vector<SolveResult> reports;
  Eigen::MatrixXd projected_std = project_draws(d, draws_std, pen, ctl, cfg.jobs, &reports);
  for (const auto& rep : reports)
    if (!rep.converged) ++r.projection_failures;
  r.point_fit_converged = point.converged;
  r.projection_converged =
      point.converged && pilot_converged && r.projection_failures == 0;
  record("projection", t0);

  const MpmSelection sel = mpm_select(projected_std, spec);
  r.selected = sel.groups;
  r.frequency = sel.frequency;

  Eigen::MatrixXd debiased_std;
  Eigen::VectorXd debiased_fit_std;
  if (cfg.debias) {
    t0 = clock();
    log_stage("debias", "nodewise fits for " + std::to_string(spec.n_groups()) +
                            " groups");
    NodewiseOptions nopt;
    nopt.lambda = cfg.nodewise_lambda;
    nopt.folds = cfg.folds;
    nopt.grid_size = cfg.nodewise_grid;
    nopt.min_ratio = cfg.grid_min_ratio;
    nopt.seed = cfg.seed;
    nopt.control.tol = cfg.nodewise_tol;
    nopt.control.max_iter = cfg.nodewise_max_iter;
    ThetaHat theta;
    try {
      theta = build_theta_hat(d, nopt);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(ExitCode::kDebias, std::string("debias: ") + e.what());
    }
    r.debias_converged = theta.all_converged;
    debiased_std = debias_draws(d, theta, draws_std, projected_std);
    debiased_fit_std = debiased_group_lasso(d, theta, yc, point.coef);
    record("debias", t0);
  }

  t0 = clock();
  const Eigen::VectorXd inv_scale = d.col_scale.cwiseInverse();
  const auto unscale_rows = [&inv_scale](Eigen::MatrixXd m) {
    m.array().rowwise() *= inv_scale.transpose().array();
    return m;
  };
  r.draws = unscale_rows(std::move(draws_std));
  r.projected = unscale_rows(std::move(projected_std));
  if (cfg.debias) {
    r.debiased = unscale_rows(std::move(debiased_std));
    r.debiased_fit = debiased_fit_std.cwiseProduct(inv_scale);
  }
  r.penalized_fit = point.coef.cwiseProduct(inv_scale);
  r.point_estimate = mpm_point_estimate(r.projected, spec, sel);
  r.intercept = ybar - d.col_center.dot(r.point_estimate);
  r.band = credible_intervals(cfg.debias ? r.debiased : r.projected, cfg.level);
  r.sigma = post.sigma;
  r.a_n = post.a_n;
  r.df = post.df;
  record("summarize", t0);
  log_stage("done", std::to_string(r.selected.size()) + " groups selected");
  return r;
}

AdditiveRunResult run_additive(const Eigen::MatrixXd& xraw, const Eigen::VectorXd& y,
                               const RunConfig& cfg) {
  RunConfig fit_cfg = cfg;
  fit_cfg.mode = "additive";
  fit_cfg.validate();
  if (xraw.rows() != y.size())
    config_fail("x has " + std::to_string(xraw.rows()) + " rows but y has " +
                std::to_string(y.size()));

  AdditiveRunResult out;
  AdditiveExpansion ex;
  try {
    ex = expand_additive_design(xraw, cfg.n_basis, cfg.degree);
  } catch (const std::invalid_argument& e) {
    config_fail(e.what());
  }
  out.bases = ex.bases;
  out.expanded_p = static_cast<int>(ex.design.p());
  log_stage("additive", "expanded design is " + std::to_string(ex.design.n()) + " x " +
                            std::to_string(out.expanded_p));

  // Basis columns are centered and on comparable scales already; standardizing
  // them would distort the within-group geometry of each component.
  fit_cfg.standardize = false;
  fit_cfg.center_y = true;
  out.fit = run_fit(ex.design.X, y, ex.design.spec, fit_cfg);

  out.fitted = Eigen::VectorXd::Constant(y.size(), out.fit.intercept) +
               ex.design.X * out.fit.point_estimate;

  const Eigen::MatrixXd& band_draws =
      cfg.debias && out.fit.debiased.size() > 0 ? out.fit.debiased : out.fit.projected;
  const int grid_n = 101;
  for (Eigen::Index k = 0; k < xraw.cols(); ++k) {
    ComponentCurve c;
    c.var = static_cast<int>(k);
    c.x = Eigen::VectorXd::LinSpaced(grid_n, xraw.col(k).minCoeff(),
                                     xraw.col(k).maxCoeff());
    Eigen::MatrixXd basis = bspline_basis(c.x, ex.bases[k]);
    basis.rowwise() -= ex.bases[k].col_means.transpose();
    const auto& cols = ex.design.spec.groups[static_cast<int>(k)];
    const int offset = cols.front();
    const int width = static_cast<int>(cols.size());
    c.estimate = basis * out.fit.point_estimate.segment(offset, width);
    const Eigen::MatrixXd curves =
        band_draws.middleCols(offset, width) * basis.transpose();
    const CredibleBand band = credible_intervals(curves, cfg.level);
    c.lower = band.lower;
    c.upper = band.upper;
    out.components.push_back(std::move(c));
  }
  return out;
}

void parse_method(const std::string& name, PenaltyKind* kind, bool* debias) {
  std::string base = name;
  *debias = false;
  const std::string suffix = "-debias";
  if (base.size() > suffix.size() &&
      base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    *debias = true;
    base.resize(base.size() - suffix.size());
  }
  if (base == "gl") {
    *kind = PenaltyKind::kGroupLasso;
  } else if (base == "gscad") {
    *kind = PenaltyKind::kGroupScad;
  } else if (base == "agl") {
    *kind = PenaltyKind::kAdaptiveGroupLasso;
  } else {
    config_fail("unknown method '" + name +
                "' (expected gl, gscad, or agl, with an optional -debias suffix)");
  }
}

namespace {

json scenario_to_json(const StudyScenario& s) {
  json j;
  j["name"] = s.name;
  j["kind"] = s.kind;
  if (s.kind == "linear") {
    j["n"] = s.linear.n;
    j["K"] = s.linear.n_groups;
    j["group_size"] = s.linear.group_size;
    j["s0"] = s.linear.s0;
    j["signal_lo"] = s.linear.signal_lo;
    j["signal_hi"] = s.linear.signal_hi;
    j["sigma"] = s.linear.sigma;
    j["jitter_sizes"] = s.linear.jitter_sizes;
    j["ar1_rho"] = s.linear.ar1_rho;
  } else {
    j["n"] = s.additive.n;
    j["n_vars"] = s.additive.n_vars;
    j["x_lo"] = s.additive.x_lo;
    j["x_hi"] = s.additive.x_hi;
    j["sigma"] = s.additive.sigma;
    j["n_basis"] = s.n_basis;
    j["degree"] = s.degree;
  }
  return j;
}

StudyScenario scenario_from_json(const json& j, int index) {
  if (!j.is_object()) config_fail("each scenario must be a JSON object");
  StudyScenario s;
  s.name = "scenario" + std::to_string(index + 1);
  if (j.contains("kind")) s.kind = as_string(j["kind"], "kind");
  if (s.kind != "linear" && s.kind != "additive")
    config_fail("scenario kind must be linear or additive");
  for (const auto& [key, val] : j.items()) {
    if (key == "kind") continue;
    if (key == "name") {
      s.name = as_string(val, key);
    } else if (key == "n") {
      if (s.kind == "linear")
        s.linear.n = as_int(val, key);
      else
        s.additive.n = as_int(val, key);
    } else if (key == "sigma") {
      if (s.kind == "linear")
        s.linear.sigma = as_double(val, key);
      else
        s.additive.sigma = as_double(val, key);
    } else if (s.kind == "linear" && key == "K") {
      s.linear.n_groups = as_int(val, key);
    } else if (s.kind == "linear" && key == "group_size") {
      s.linear.group_size = as_int(val, key);
    } else if (s.kind == "linear" && key == "s0") {
      s.linear.s0 = as_int(val, key);
    } else if (s.kind == "linear" && key == "signal_lo") {
      s.linear.signal_lo = as_double(val, key);
    } else if (s.kind == "linear" && key == "signal_hi") {
      s.linear.signal_hi = as_double(val, key);
    } else if (s.kind == "linear" && key == "jitter_sizes") {
      s.linear.jitter_sizes = as_bool(val, key);
    } else if (s.kind == "linear" && key == "ar1_rho") {
      s.linear.ar1_rho = as_double(val, key);
    } else if (s.kind == "additive" && key == "n_vars") {
      s.additive.n_vars = as_int(val, key);
    } else if (s.kind == "additive" && key == "x_lo") {
      s.additive.x_lo = as_double(val, key);
    } else if (s.kind == "additive" && key == "x_hi") {
      s.additive.x_hi = as_double(val, key);
    } else if (s.kind == "additive" && key == "n_basis") {
      s.n_basis = as_int(val, key);
    } else if (s.kind == "additive" && key == "degree") {
      s.degree = as_int(val, key);
    } else {
      config_fail("unknown scenario key '" + key + "' for kind " + s.kind);
    }
  }
  return s;
}

void validate_scenario(const StudyScenario& s) {
  if (s.kind == "linear") {
    const auto& sc = s.linear;
    if (sc.n <= 0 || sc.n_groups <= 0 || sc.group_size <= 0)
      config_fail("scenario " + s.name + ": dimensions must be positive");
    if (sc.s0 < 0 || sc.s0 > sc.n_groups)
      config_fail("scenario " + s.name + ": s0 must lie in 0..K");
    if (!(sc.signal_hi >= sc.signal_lo && sc.signal_lo >= 0.0))
      config_fail("scenario " + s.name + ": bad signal range");
    if (!(sc.sigma >= 0.0)) config_fail("scenario " + s.name + ": sigma must be >= 0");
    if (!(sc.ar1_rho >= 0.0 && sc.ar1_rho < 1.0))
      config_fail("scenario " + s.name + ": ar1_rho must be in [0, 1)");
  } else {
    const auto& sc = s.additive;
    if (sc.n <= 0 || sc.n_vars < 5)
      config_fail("scenario " + s.name + ": need n > 0 and at least 5 covariates");
    if (!(sc.x_hi > sc.x_lo)) config_fail("scenario " + s.name + ": bad covariate range");
    if (s.degree < 1 || s.n_basis < s.degree + 1)
      config_fail("scenario " + s.name + ": n_basis must be at least degree + 1");
  }
}

}  // namespace

StudyConfig study_config_from_json_text(const std::string& text) {
  const json j = parse_json_text(text, "study config");
  if (!j.is_object()) config_fail("study config must be a JSON object");
  StudyConfig cfg;
  for (const auto& [key, val] : j.items()) {
    if (key == "replicates") {
      cfg.replicates = as_int(val, key);
    } else if (key == "methods") {
      if (!val.is_array()) config_fail("'methods' must be an array of method names");
      for (const auto& m : val) cfg.methods.push_back(as_string(m, "methods"));
    } else if (key == "scenarios") {
      if (!val.is_array()) config_fail("'scenarios' must be an array");
      int index = 0;
      for (const auto& s : val) cfg.scenarios.push_back(scenario_from_json(s, index++));
    } else {
      apply_config_key(cfg.base, key, val);
    }
  }
  return cfg;
}

std::string study_config_to_json_text(const StudyConfig& cfg) {
  json j = config_to_json(cfg.base);
  for (const char* drop : {"mode", "x", "y", "groups", "dump_draws", "n_basis",
                           "degree", "penalty", "debias"})
    j.erase(drop);
  j["replicates"] = cfg.replicates;
  j["methods"] = cfg.methods;
  j["scenarios"] = json::array();
  for (const auto& s : cfg.scenarios) j["scenarios"].push_back(scenario_to_json(s));
  return j.dump(2) + "\n";
}

namespace {

struct StudyTask {
  int scenario = 0;
  int replicate = 0;
};

void append_metric(std::vector<StudyRow>* rows, const std::string& scenario,
                   const std::string& method, int replicate, const std::string& metric,
                   double value) {
  rows->push_back({scenario, method, replicate, metric, value});
}

std::vector<StudyRow> run_study_task(const StudyConfig& cfg, const StudyScenario& sc,
                                     int si, int rep) {
  std::vector<StudyRow> rows;
  const std::uint64_t seed_r = replicate_seed(replicate_seed(cfg.base.seed, si), rep);
  if (sc.kind == "linear") {
    const LinearData data = generate_linear(sc.linear, seed_r);
    std::vector<char> is_signal(data.beta0.size());
    for (Eigen::Index jj = 0; jj < data.beta0.size(); ++jj)
      is_signal[jj] = data.beta0[jj] != 0.0 ? 1 : 0;
    for (const auto& method : cfg.methods) {
      RunConfig rc = cfg.base;
      rc.mode = "fit";
      parse_method(method, &rc.penalty, &rc.debias);
      rc.seed = seed_r;
      rc.jobs = 1;
      const RunResult res = run_fit(data.x, data.y, data.spec, rc);
      const SelectionMetrics sm =
          selection_metrics(res.selected, data.signal_groups, data.spec.n_groups());
      const CoverageMetrics cm =
          coverage_metrics(res.band.lower, res.band.upper, data.beta0, is_signal);
      const auto add = [&](const std::string& metric, double value) {
        append_metric(&rows, sc.name, method, rep, metric, value);
      };
      add("mse", coefficient_mse(res.point_estimate, data.beta0));
      add("tp", sm.true_positives);
      add("fp", sm.false_positives);
      add("fn", sm.false_negatives);
      add("precision", sm.precision);
      add("recall", sm.recall);
      add("f1", sm.f1);
      add("signal_coverage", cm.signal_coverage);
      add("noise_coverage", cm.noise_coverage);
      add("signal_width", cm.signal_width);
      add("noise_width", cm.noise_width);
      add("lambda", res.lambda);
      add("sigma", res.sigma);
      add("projection_failures", res.projection_failures);
      add("converged", res.projection_converged && res.debias_converged ? 1.0 : 0.0);
    }
  } else {
    const AdditiveData data = generate_additive(sc.additive, seed_r);
    for (const auto& method : cfg.methods) {
      RunConfig rc = cfg.base;
      rc.mode = "additive";
      parse_method(method, &rc.penalty, &rc.debias);
      rc.seed = seed_r;
      rc.jobs = 1;
      rc.n_basis = sc.n_basis;
      rc.degree = sc.degree;
      const AdditiveRunResult res = run_additive(data.x, data.y, rc);
      const SelectionMetrics sm =
          selection_metrics(res.fit.selected, data.signal_vars, sc.additive.n_vars);
      bool exact = res.fit.selected.size() == data.signal_vars.size();
      if (exact)
        for (std::size_t i = 0; i < data.signal_vars.size(); ++i)
          exact = exact && res.fit.selected[i] == data.signal_vars[i];
      const auto add = [&](const std::string& metric, double value) {
        append_metric(&rows, sc.name, method, rep, metric, value);
      };
      add("tp", sm.true_positives);
      add("fp", sm.false_positives);
      add("fn", sm.false_negatives);
      add("precision", sm.precision);
      add("recall", sm.recall);
      add("f1", sm.f1);
      add("exact_recovery", exact ? 1.0 : 0.0);
      add("recovery_error", additive_recovery_error(res.fitted, data.f_true));
      add("lambda", res.fit.lambda);
      add("sigma", res.fit.sigma);
      add("projection_failures", res.fit.projection_failures);
      add("converged",
          res.fit.projection_converged && res.fit.debias_converged ? 1.0 : 0.0);
    }
  }
  return rows;
}

}  // namespace

StudyResult run_study(const StudyConfig& cfg) {
  if (cfg.replicates < 1) config_fail("replicates must be >= 1");
  if (cfg.methods.empty()) config_fail("at least one method is required");
  if (cfg.scenarios.empty()) config_fail("at least one scenario is required");
  for (const auto& m : cfg.methods) {
    PenaltyKind kind;
    bool debias;
    parse_method(m, &kind, &debias);
  }
  for (const auto& s : cfg.scenarios) validate_scenario(s);
  {
    RunConfig probe = cfg.base;
    probe.mode = "fit";
    probe.validate();
  }

  const int n_tasks = static_cast<int>(cfg.scenarios.size()) * cfg.replicates;
  std::vector<std::vector<StudyRow>> per_task(n_tasks);
  std::atomic<int> next{0};
  std::mutex err_mutex;
  bool failed = false;
  ExitCode err_code = ExitCode::kInternal;
  std::string err_msg;

  const auto worker = [&] {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= n_tasks || failed) break;
      const int si = t / cfg.replicates;
      const int rep = t % cfg.replicates;
      try {
        per_task[t] = run_study_task(cfg, cfg.scenarios[si], si, rep);
      } catch (const StageError& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failed) {
          failed = true;
          err_code = e.code;
          err_msg = "scenario " + cfg.scenarios[si].name + " replicate " +
                    std::to_string(rep + 1) + ": " + e.what();
        }
        break;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failed) {
          failed = true;
          err_code = ExitCode::kInternal;
          err_msg = "scenario " + cfg.scenarios[si].name + " replicate " +
                    std::to_string(rep + 1) + ": " + e.what();
        }
        break;
      }
    }
  };

  const int jobs = std::max(1, std::min(cfg.base.jobs, n_tasks));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    for (int i = 0; i < jobs; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  if (failed) throw StageError(err_code, err_msg);

  StudyResult out;
  for (auto& rows : per_task)
    for (auto& row : rows) out.rows.push_back(std::move(row));

  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>>
      buckets;
  for (const auto& row : out.rows)
    buckets[row.scenario][row.method][row.metric].push_back(row.value);
  for (const auto& [scenario, by_method] : buckets)
    for (const auto& [method, by_metric] : by_method)
      for (const auto& [metric, values] : by_metric)
        out.summary[scenario][method][metric] = mean_se(values);
  return out;
}

DesignDiagnostics diagnose_design(const Eigen::MatrixXd& x, const GroupSpec& spec,
                                  const std::vector<int>& signal_groups) {
  try {
    spec.validate(static_cast<int>(x.cols()));
  } catch (const std::invalid_argument& e) {
    config_fail(e.what());
  }
  if (signal_groups.empty()) config_fail("diagnose needs a nonempty signal group set");
  for (int g : signal_groups)
    if (g < 0 || g >= spec.n_groups())
      config_fail("signal group " + std::to_string(g + 1) + " outside 1.." +
                  std::to_string(spec.n_groups()));

  DesignDiagnostics diag;
  diag.n = static_cast<int>(x.rows());
  diag.p = static_cast<int>(x.cols());
  diag.n_groups = spec.n_groups();
  diag.signal_groups = signal_groups;
  const GroupedDesign d = standardize(make_design(x, spec));
  diag.restricted_eig = restricted_eigenvalue(d, signal_groups);
  diag.irrepresentability =
      static_cast<int>(signal_groups.size()) < spec.n_groups()
          ? irrepresentability_statistic(d, signal_groups)
          : 0.0;
  return diag;
}

std::string diagnostics_json_text(const DesignDiagnostics& diag) {
  json j;
  j["n"] = diag.n;
  j["p"] = diag.p;
  j["n_groups"] = diag.n_groups;
  j["signal_groups"] = groups_to_json_1based(diag.signal_groups);
  j["restricted_eig"] = diag.restricted_eig;
  j["irrepresentability"] = diag.irrepresentability;
  return j.dump(2) + "\n";
}

std::string report_json_text(const RunConfig& cfg, const RunResult& r) {
  json j;
  j["version"] = kVersion;
  j["config"] = config_to_json(cfg);
  json res;
  res["lambda"] = r.lambda;
  res["sigma"] = r.sigma;
  res["a_n"] = r.a_n;
  res["df"] = r.df;
  res["intercept"] = r.intercept;
  res["selected_groups"] = groups_to_json_1based(r.selected);
  res["frequency"] = vector_to_json(r.frequency);
  res["point_estimate"] = vector_to_json(r.point_estimate);
  res["penalized_fit"] = vector_to_json(r.penalized_fit);
  if (r.debiased_fit.size() > 0) res["debiased_fit"] = vector_to_json(r.debiased_fit);
  res["level"] = r.band.level;
  res["lower"] = vector_to_json(r.band.lower);
  res["upper"] = vector_to_json(r.band.upper);
  res["projection_failures"] = r.projection_failures;
  res["converged"] = r.projection_converged && r.debias_converged;
  j["results"] = res;
  json t = json::object();
  for (const auto& [stage, sec] : r.timings) t[stage] = sec;
  j["timings"] = t;
  return j.dump(2) + "\n";
}

void write_fit_artifacts(const RunConfig& cfg, const RunResult& r) {
  if (cfg.out_dir.empty()) config_fail("an output directory is required");
  ensure_dir(cfg.out_dir);
  const auto hdr = artifact_header(cfg.seed, config_hash(cfg));

  write_with_header(join_path(cfg.out_dir, "report.json"), hdr, report_json_text(cfg, r));

  const Eigen::Index p = r.point_estimate.size();
  std::vector<int> group_of(p, 0);
  for (int k = 0; k < r.spec.n_groups(); ++k)
    for (int jj : r.spec.groups[k]) group_of[jj] = k;
  const bool has_debias = r.debiased_fit.size() > 0;
  Eigen::MatrixXd table(p, has_debias ? 7 : 6);
  for (Eigen::Index jj = 0; jj < p; ++jj) {
    table(jj, 0) = static_cast<double>(jj + 1);
    table(jj, 1) = static_cast<double>(group_of[jj] + 1);
    table(jj, 2) = r.point_estimate[jj];
    table(jj, 3) = r.penalized_fit[jj];
    table(jj, 4) = r.band.lower[jj];
    table(jj, 5) = r.band.upper[jj];
    if (has_debias) table(jj, 6) = r.debiased_fit[jj];
  }
  std::vector<std::string> names = {"column", "group",  "estimate",
                                    "penalized", "lower", "upper"};
  if (has_debias) names.push_back("debiased");
  write_matrix_csv(join_path(cfg.out_dir, "estimates.csv"), table, hdr, names);

  if (cfg.dump_draws) {
    write_matrix_csv(join_path(cfg.out_dir, "draws.csv"), r.draws, hdr, {});
    write_matrix_csv(join_path(cfg.out_dir, "projected.csv"), r.projected, hdr, {});
    if (r.debiased.size() > 0)
      write_matrix_csv(join_path(cfg.out_dir, "debiased.csv"), r.debiased, hdr, {});
  }
}

void write_additive_artifacts(const RunConfig& cfg, const AdditiveRunResult& r) {
  write_fit_artifacts(cfg, r.fit);
  const auto hdr = artifact_header(cfg.seed, config_hash(cfg));
  Eigen::Index total = 0;
  for (const auto& c : r.components) total += c.x.size();
  Eigen::MatrixXd table(total, 5);
  Eigen::Index row = 0;
  for (const auto& c : r.components)
    for (Eigen::Index i = 0; i < c.x.size(); ++i, ++row) {
      table(row, 0) = static_cast<double>(c.var + 1);
      table(row, 1) = c.x[i];
      table(row, 2) = c.estimate[i];
      table(row, 3) = c.lower[i];
      table(row, 4) = c.upper[i];
    }
  write_matrix_csv(join_path(cfg.out_dir, "components.csv"), table, hdr,
                   {"var", "x", "estimate", "lower", "upper"});
}

void write_study_artifacts(const std::string& out_dir, const StudyConfig& cfg,
                           const StudyResult& r) {
  if (out_dir.empty()) config_fail("an output directory is required");
  ensure_dir(out_dir);
  const std::string cfg_text = study_config_to_json_text(cfg);
  const auto hdr = artifact_header(cfg.base.seed, fnv1a64(cfg_text));

  std::string long_csv = "scenario,method,replicate,metric,value\n";
  for (const auto& row : r.rows)
    long_csv += row.scenario + "," + row.method + "," + std::to_string(row.replicate + 1) +
                "," + row.metric + "," + format_double(row.value) + "\n";
  write_with_header(join_path(out_dir, "metrics_long.csv"), hdr, long_csv);

  std::string table_csv = "scenario,method,metric,mean,se\n";
  for (const auto& [scenario, by_method] : r.summary)
    for (const auto& [method, by_metric] : by_method)
      for (const auto& [metric, ms] : by_metric)
        table_csv += scenario + "," + method + "," + metric + "," +
                     format_double(ms.mean) + "," + format_double(ms.se) + "\n";
  write_with_header(join_path(out_dir, "summary_table.csv"), hdr, table_csv);

  json j;
  j["version"] = kVersion;
  j["config"] = parse_json_text(cfg_text, "study config");
  json summary = json::object();
  for (const auto& [scenario, by_method] : r.summary) {
    json sm = json::object();
    for (const auto& [method, by_metric] : by_method) {
      json mm = json::object();
      for (const auto& [metric, ms] : by_metric) {
        json entry;
        entry["mean"] = ms.mean;
        entry["se"] = ms.se;
        mm[metric] = entry;
      }
      sm[method] = mm;
    }
    summary[scenario] = sm;
  }
  j["summary"] = summary;
  write_with_header(join_path(out_dir, "study_summary.json"), hdr, j.dump(2) + "\n");
}

}  // namespace sparseproj
