#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sparseproj/io.hpp"
#include "sparseproj/pipeline.hpp"

namespace sp = sparseproj;

namespace {

// Options shared by fit, debias, and additive. Option pointers let a config
// file supply defaults while explicit flags win.
struct FitFlags {
  std::string config, x, y, groups, out;
  std::string penalty, lambda, sigma;
  double tau = 0, an = 0, level = 0, tol = 0, min_ratio = 0, nodewise_lambda = 0;
  int draws = 0, folds = 0, grid = 0, nodewise_grid = 0, jobs = 0, max_iter = 0;
  int nbasis = 0, degree = 0;
  std::uint64_t seed = 0;
  bool dump_draws = false, debias = false, no_standardize = false;

  CLI::Option *o_config = nullptr, *o_x = nullptr, *o_y = nullptr, *o_groups = nullptr,
              *o_out = nullptr, *o_penalty = nullptr, *o_lambda = nullptr,
              *o_sigma = nullptr, *o_tau = nullptr, *o_an = nullptr, *o_level = nullptr,
              *o_tol = nullptr, *o_min_ratio = nullptr, *o_draws = nullptr,
              *o_folds = nullptr, *o_grid = nullptr, *o_nodewise_grid = nullptr,
              *o_nodewise_lambda = nullptr,
              *o_jobs = nullptr, *o_max_iter = nullptr, *o_nbasis = nullptr,
              *o_degree = nullptr, *o_seed = nullptr, *o_dump = nullptr,
              *o_debias = nullptr, *o_no_standardize = nullptr;
};

void add_fit_flags(CLI::App* sub, FitFlags* f, bool additive) {
  f->o_config = sub->add_option("--config", f->config,
                                "JSON config, or a report.json to rerun");
  f->o_x = sub->add_option("--x", f->x, "design matrix CSV");
  f->o_y = sub->add_option("--y", f->y, "response CSV, one column");
  if (!additive)
    f->o_groups = sub->add_option(
        "--groups", f->groups, "group layout JSON: 1-based \"groups\" or \"sizes\"");
  f->o_out = sub->add_option("--out", f->out, "output directory for artifacts");
  f->o_penalty = sub->add_option("--penalty", f->penalty, "penalty family")
                     ->check(CLI::IsMember({"gl", "gscad", "agl"}));
  f->o_lambda = sub->add_option("--lambda", f->lambda, "cv or a fixed positive value");
  f->o_sigma = sub->add_option("--sigma", f->sigma, "auto or a fixed positive value");
  f->o_tau = sub->add_option("--tau", f->tau, "SCAD shape, > 2");
  f->o_an = sub->add_option("--an", f->an, "ridge offset; <= 0 means 1/n");
  f->o_draws = sub->add_option("--draws", f->draws, "posterior draw count");
  f->o_seed = sub->add_option("--seed", f->seed, "master seed (required)");
  f->o_folds = sub->add_option("--folds", f->folds, "cross-validation folds");
  f->o_grid = sub->add_option("--grid", f->grid, "lambda grid size");
  f->o_min_ratio = sub->add_option("--grid-min-ratio", f->min_ratio,
                                   "smallest grid value relative to lambda_max");
  f->o_nodewise_grid =
      sub->add_option("--nodewise-grid", f->nodewise_grid, "nodewise lambda grid size");
  f->o_nodewise_lambda = sub->add_option(
      "--nodewise-lambda", f->nodewise_lambda,
      "nodewise penalty: <0 cross-validated, 0 least squares, >0 fixed");
  f->o_level = sub->add_option("--level", f->level, "credible level in (0, 1)");
  f->o_jobs = sub->add_option("--jobs", f->jobs, "worker thread cap");
  f->o_tol = sub->add_option("--tol", f->tol, "solver tolerance");
  f->o_max_iter = sub->add_option("--max-iter", f->max_iter, "solver cycle cap");
  if (additive) {
    f->o_nbasis = sub->add_option("--nbasis", f->nbasis, "B-spline basis size per covariate");
    f->o_degree = sub->add_option("--degree", f->degree, "B-spline degree");
  }
  f->o_dump = sub->add_flag("--dump-draws", f->dump_draws,
                            "also write draws/projected/debiased CSVs");
  f->o_debias = sub->add_flag("--debias", f->debias, "debias the projected draws");
  f->o_no_standardize =
      sub->add_flag("--no-standardize", f->no_standardize, "skip column standardization");
}

double parse_positive(const std::string& text, const char* flag) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !(v > 0.0))
    throw sp::StageError(sp::ExitCode::kConfig,
                         std::string(flag) + " expects a positive number, got '" +
                             text + "'");
  return v;
}

sp::RunConfig build_config(const FitFlags& f, const char* mode, bool force_debias) {
  sp::RunConfig cfg;
  if (f.o_config->count()) cfg = sp::config_from_json_text(sp::read_text_file(f.config));
  cfg.mode = mode;
  if (f.o_x->count()) cfg.x_path = f.x;
  if (f.o_y->count()) cfg.y_path = f.y;
  if (f.o_groups != nullptr && f.o_groups->count()) cfg.groups_path = f.groups;
  if (f.o_out->count()) cfg.out_dir = f.out;
  if (f.o_penalty->count()) {
    bool ignored = false;
    sp::parse_method(f.penalty, &cfg.penalty, &ignored);
  }
  if (f.o_lambda->count()) {
    if (f.lambda == "cv") {
      cfg.lambda_cv = true;
      cfg.lambda = 0.0;
    } else {
      cfg.lambda_cv = false;
      cfg.lambda = parse_positive(f.lambda, "--lambda");
    }
  }
  if (f.o_sigma->count()) {
    if (f.sigma == "auto")
      cfg.sigma = 0.0;
    else
      cfg.sigma = parse_positive(f.sigma, "--sigma");
  }
  if (f.o_tau->count()) cfg.tau = f.tau;
  if (f.o_an->count()) cfg.a_n = f.an;
  if (f.o_draws->count()) cfg.draws = f.draws;
  if (f.o_seed->count()) {
    cfg.seed = f.seed;
    cfg.seed_set = true;
  }
  if (f.o_folds->count()) cfg.folds = f.folds;
  if (f.o_grid->count()) cfg.grid_size = f.grid;
  if (f.o_min_ratio->count()) cfg.grid_min_ratio = f.min_ratio;
  if (f.o_nodewise_grid->count()) cfg.nodewise_grid = f.nodewise_grid;
  if (f.o_nodewise_lambda->count()) cfg.nodewise_lambda = f.nodewise_lambda;
  if (f.o_level->count()) cfg.level = f.level;
  if (f.o_jobs->count()) cfg.jobs = f.jobs;
  if (f.o_tol->count()) cfg.tol = f.tol;
  if (f.o_max_iter->count()) cfg.max_iter = f.max_iter;
  if (f.o_nbasis != nullptr && f.o_nbasis->count()) cfg.n_basis = f.nbasis;
  if (f.o_degree != nullptr && f.o_degree->count()) cfg.degree = f.degree;
  if (f.o_dump->count()) cfg.dump_draws = f.dump_draws;
  if (f.o_debias->count()) cfg.debias = f.debias;
  if (f.o_no_standardize->count()) cfg.standardize = !f.no_standardize;
  if (force_debias) cfg.debias = true;
  return cfg;
}

void require(const std::string& value, const char* what, const char* flag) {
  if (value.empty())
    throw sp::StageError(sp::ExitCode::kConfig,
                         std::string(what) + " is required: pass " + flag +
                             " or set it in --config");
}

int finish_fit(const sp::RunConfig& cfg, const sp::RunResult& r) {
  std::printf("selected %zu of %d groups (lambda=%s, sigma=%s)\n", r.selected.size(),
              r.spec.n_groups(), sp::format_double(r.lambda).c_str(),
              sp::format_double(r.sigma).c_str());
  std::printf("artifacts written to %s\n", cfg.out_dir.c_str());
  if (!r.projection_converged) {
    std::fprintf(stderr, "error [projection]: %d of %lld draw projections did not converge\n",
                 r.projection_failures, static_cast<long long>(r.projected.rows()));
    if (!r.point_fit_converged)
      std::fprintf(stderr, "error [projection]: the point fit did not converge\n");
    return static_cast<int>(sp::ExitCode::kProjection);
  }
  if (!r.debias_converged) {
    std::fprintf(stderr, "error [debias]: nodewise fits did not converge\n");
    return static_cast<int>(sp::ExitCode::kDebias);
  }
  return 0;
}

int cmd_fit(const FitFlags& f, bool force_debias) {
  sp::RunConfig cfg = build_config(f, "fit", force_debias);
  require(cfg.x_path, "a design matrix", "--x");
  require(cfg.y_path, "a response vector", "--y");
  require(cfg.groups_path, "a group specification", "--groups");
  require(cfg.out_dir, "an output directory", "--out");
  cfg.validate();
  const Eigen::MatrixXd x = sp::read_matrix_csv(cfg.x_path);
  const Eigen::VectorXd y = sp::read_vector_csv(cfg.y_path);
  const sp::GroupSpec spec = sp::read_groups_json(cfg.groups_path);
  const sp::RunResult r = sp::run_fit(x, y, spec, cfg);
  sp::write_fit_artifacts(cfg, r);
  return finish_fit(cfg, r);
}

int cmd_additive(const FitFlags& f) {
  sp::RunConfig cfg = build_config(f, "additive", false);
  require(cfg.x_path, "a covariate matrix", "--x");
  require(cfg.y_path, "a response vector", "--y");
  require(cfg.out_dir, "an output directory", "--out");
  cfg.validate();
  const Eigen::MatrixXd x = sp::read_matrix_csv(cfg.x_path);
  const Eigen::VectorXd y = sp::read_vector_csv(cfg.y_path);
  const sp::AdditiveRunResult r = sp::run_additive(x, y, cfg);
  sp::write_additive_artifacts(cfg, r);
  std::printf("expanded design is %lld x %d\n", static_cast<long long>(x.rows()),
              r.expanded_p);
  return finish_fit(cfg, r.fit);
}

int cmd_simulate(const std::string& config_path, const std::string& out,
                 CLI::Option* o_seed, std::uint64_t seed, CLI::Option* o_jobs, int jobs,
                 CLI::Option* o_reps, int reps) {
  if (config_path.empty())
    throw sp::StageError(sp::ExitCode::kConfig,
                         "a study config is required: pass --config");
  if (out.empty())
    throw sp::StageError(sp::ExitCode::kConfig,
                         "an output directory is required: pass --out");
  sp::StudyConfig cfg = sp::study_config_from_json_text(sp::read_text_file(config_path));
  if (o_seed->count()) {
    cfg.base.seed = seed;
    cfg.base.seed_set = true;
  }
  if (o_jobs->count()) cfg.base.jobs = jobs;
  if (o_reps->count()) cfg.replicates = reps;
  const sp::StudyResult r = sp::run_study(cfg);
  sp::write_study_artifacts(out, cfg, r);
  std::printf("%zu metric rows over %d replicates; artifacts written to %s\n",
              r.rows.size(), cfg.replicates, out.c_str());
  bool all_converged = true;
  for (const auto& row : r.rows)
    if (row.metric == "converged" && row.value == 0.0) all_converged = false;
  if (!all_converged) {
    std::fprintf(stderr, "error [projection]: some replicates did not converge\n");
    return static_cast<int>(sp::ExitCode::kProjection);
  }
  return 0;
}

std::vector<int> parse_group_list(const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string tok = text.substr(pos, comma - pos);
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (tok.empty() || end != tok.c_str() + tok.size() || v < 1)
      throw sp::StageError(sp::ExitCode::kConfig,
                           "--signal-groups expects comma-separated 1-based ids, got '" +
                               text + "'");
    out.push_back(static_cast<int>(v - 1));
    pos = comma + 1;
  }
  return out;
}

int cmd_diagnose(const std::string& x_path, const std::string& groups_path,
                 const std::string& signal, const std::string& out, std::uint64_t seed) {
  if (x_path.empty())
    throw sp::StageError(sp::ExitCode::kConfig, "a design matrix is required: pass --x");
  if (groups_path.empty())
    throw sp::StageError(sp::ExitCode::kConfig,
                         "a group specification is required: pass --groups");
  if (signal.empty())
    throw sp::StageError(sp::ExitCode::kConfig,
                         "a signal set is required: pass --signal-groups");
  const Eigen::MatrixXd x = sp::read_matrix_csv(x_path);
  const sp::GroupSpec spec = sp::read_groups_json(groups_path);
  const sp::DesignDiagnostics diag = sp::diagnose_design(x, spec, parse_group_list(signal));
  const std::string text = sp::diagnostics_json_text(diag);
  std::fputs(text.c_str(), stdout);
  if (!out.empty()) {
    nlohmann::json echo;
    echo["mode"] = "diagnose";
    echo["x"] = x_path;
    echo["groups"] = groups_path;
    echo["signal_groups"] = signal;
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec)
      throw sp::StageError(sp::ExitCode::kIo, "cannot create output directory " + out);
    const std::string header = "# seed=" + std::to_string(seed) + "\n# config=" +
                               sp::hex64(sp::fnv1a64(echo.dump())) + "\n";
    sp::write_text_file((std::filesystem::path(out) / "diagnose.json").string(),
                        header + text);
  }
  return 0;
}

int dispatch(const std::function<int()>& body) {
  try {
    return body();
  } catch (const sp::StageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code);
  } catch (const sp::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(sp::ExitCode::kIo);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(sp::ExitCode::kConfig);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return static_cast<int>(sp::ExitCode::kInternal);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grouped-sparse Bayesian regression via projected posterior draws"};
  app.set_version_flag("--version", std::string(sp::kVersion));
  app.require_subcommand(1);

  CLI::App* fit = app.add_subcommand("fit", "fit a grouped linear model from CSV data");
  FitFlags ff;
  add_fit_flags(fit, &ff, false);

  CLI::App* debias = app.add_subcommand(
      "debias", "fit with debiased credible intervals (fit --debias)");
  FitFlags df;
  add_fit_flags(debias, &df, false);

  CLI::App* additive =
      app.add_subcommand("additive", "fit a sparse additive model via B-spline groups");
  FitFlags af;
  add_fit_flags(additive, &af, true);

  CLI::App* simulate =
      app.add_subcommand("simulate", "run a replicated synthetic study from a config");
  std::string sim_config, sim_out;
  std::uint64_t sim_seed = 0;
  int sim_jobs = 0, sim_reps = 0;
  CLI::Option* sim_o_config =
      simulate->add_option("--config", sim_config, "study config JSON");
  CLI::Option* sim_o_out =
      simulate->add_option("--out", sim_out, "output directory for artifacts");
  CLI::Option* sim_o_seed =
      simulate->add_option("--seed", sim_seed, "override the master seed");
  CLI::Option* sim_o_jobs =
      simulate->add_option("--jobs", sim_jobs, "worker thread cap");
  CLI::Option* sim_o_reps =
      simulate->add_option("--reps", sim_reps, "override the replicate count");
  (void)sim_o_config;
  (void)sim_o_out;

  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "assumption statistics for a design and a candidate signal set");
  std::string diag_x, diag_groups, diag_signal, diag_out;
  std::uint64_t diag_seed = 0;
  diagnose->add_option("--x", diag_x, "design matrix CSV");
  diagnose->add_option("--groups", diag_groups, "group layout JSON");
  diagnose->add_option("--signal-groups", diag_signal,
                       "comma-separated 1-based signal group ids");
  diagnose->add_option("--out", diag_out, "optional output directory");
  diagnose->add_option("--seed", diag_seed, "seed recorded in the artifact header");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(sp::ExitCode::kConfig);
  }

  if (fit->parsed()) return dispatch([&] { return cmd_fit(ff, false); });
  if (debias->parsed()) return dispatch([&] { return cmd_fit(df, true); });
  if (additive->parsed()) return dispatch([&] { return cmd_additive(af); });
  if (simulate->parsed())
    return dispatch([&] {
      return cmd_simulate(sim_config, sim_out, sim_o_seed, sim_seed, sim_o_jobs,
                          sim_jobs, sim_o_reps, sim_reps);
    });
  if (diagnose->parsed())
    return dispatch(
        [&] { return cmd_diagnose(diag_x, diag_groups, diag_signal, diag_out, diag_seed); });
  return static_cast<int>(sp::ExitCode::kConfig);
}
