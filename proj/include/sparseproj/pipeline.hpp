#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>
#include <Eigen/Core>

#include "sparseproj/additive.hpp"
#include "sparseproj/debias.hpp"
#include "sparseproj/dense_posterior.hpp"
#include "sparseproj/grouped_design.hpp"
#include "sparseproj/projection.hpp"
#include "sparseproj/simulation.hpp"

namespace sparseproj {

inline constexpr const char* kVersion = "0.1.0";

// Process exit codes, partitioned by the stage that failed.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,      // invalid configuration or semantic validation failure
  kIo = 3,          // unreadable/unwritable files, parse errors
  kPosterior = 4,   // dense posterior stage produced non-finite output
  kProjection = 5,  // projection stage did not converge
  kDebias = 6,      // debias stage did not converge
  kInternal = 7,    // unexpected failure
};

// Failure tagged with the stage it came from; the CLI maps it to an exit code.
struct StageError : std::runtime_error {
  ExitCode code;
  StageError(ExitCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

// Complete description of one fit or additive run. Everything that affects
// the numbers lives here, so a config echo regenerates the run exactly.
struct RunConfig {
  std::string mode = "fit";  // fit | additive
  std::string x_path;
  std::string y_path;
  std::string groups_path;
  std::string out_dir;  // not part of the config echo or hash

  PenaltyKind penalty = PenaltyKind::kGroupLasso;
  bool lambda_cv = true;  // pick lambda by cross validation
  double lambda = 0.0;    // fixed value when lambda_cv is off
  double tau = 3.7;
  bool size_scaled = true;
  double a_n = 0.0;   // <= 0: default 1/n
  double sigma = 0.0; // <= 0: estimated from ridge residuals
  int draws = 500;
  std::uint64_t seed = 0;
  bool seed_set = false;  // a seed must be given explicitly, never defaulted
  int folds = 5;
  int grid_size = 50;
  double grid_min_ratio = 1e-3;
  int nodewise_grid = 20;
  // Penalty level for the nodewise regressions behind the debias step:
  // < 0 cross-validates per block, 0 uses the exact least-squares limit,
  // > 0 fixes the level for every block.
  double nodewise_lambda = -1.0;
  bool debias = false;
  double level = 0.95;
  int jobs = 1;
  bool standardize = true;  // center and rescale the design columns
  bool center_y = true;     // fit to y - mean(y), report the intercept
  double tol = 1e-7;
  int max_iter = 10000;
  double nodewise_tol = 1e-7;
  int nodewise_max_iter = 10000;
  int n_basis = 8;  // additive mode
  int degree = 3;   // additive mode
  bool dump_draws = false;

  // Throws StageError(kConfig) on the first violated requirement.
  void validate() const;
};

// JSON round trip for the config echo. The reader accepts either a bare
// config object or a full report (its "config" member is used), and skips
// leading '#' header lines. Unknown keys are rejected.
RunConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const RunConfig& cfg);
// FNV-1a over the canonical config echo; stamped into every artifact header.
std::uint64_t config_hash(const RunConfig& cfg);

// Outputs of one run, on the original column scale of the inputs.
struct RunResult {
  Eigen::VectorXd point_estimate;  // mean of the projected draws on the selected groups
  double intercept = 0.0;
  Eigen::VectorXd penalized_fit;   // single penalized least-squares fit
  Eigen::VectorXd debiased_fit;    // corrected penalized fit (debias runs only)
  std::vector<int> selected;       // 0-based group ids
  Eigen::VectorXd frequency;       // per-group selection frequency across draws
  CredibleBand band;               // from the debiased draws when debias is on
  Eigen::MatrixXd draws;           // dense posterior draws
  Eigen::MatrixXd projected;       // projected draws
  Eigen::MatrixXd debiased;        // corrected draws; empty unless debias is on
  GroupSpec spec;

  double lambda = 0.0;  // penalty level actually used (standardized scale)
  double sigma = 0.0;
  double a_n = 0.0;
  double df = 0.0;
  int projection_failures = 0;  // draws whose projection did not converge
  bool point_fit_converged = true;
  bool projection_converged = true;  // point fit, pilot, and every draw
  bool debias_converged = true;
  std::map<std::string, double> timings;  // stage -> seconds
};

// Full pipeline on in-memory data: standardize, ridge posterior, draw,
// tune lambda, project, select, optionally debias, summarize.
RunResult run_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  const GroupSpec& spec, const RunConfig& cfg);

// One fitted additive component on an evaluation grid.
struct ComponentCurve {
  int var = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct AdditiveRunResult {
  RunResult fit;  // on the expanded design, one group per covariate
  std::vector<SplineBasisSpec> bases;
  std::vector<ComponentCurve> components;
  Eigen::VectorXd fitted;  // intercept + sum of fitted components at the samples
  int expanded_p = 0;
};

// Expands each covariate into a centered B-spline block, then runs the fit
// pipeline on the expanded design (without column standardization).
AdditiveRunResult run_additive(const Eigen::MatrixXd& xraw, const Eigen::VectorXd& y,
                               const RunConfig& cfg);

// Method label "gl" | "gscad" | "agl", with an optional "-debias" suffix.
void parse_method(const std::string& name, PenaltyKind* kind, bool* debias);

struct StudyScenario {
  std::string name;
  std::string kind = "linear";  // linear | additive
  LinearScenario linear;
  AdditiveScenario additive;
  int n_basis = 8;  // additive kind only
  int degree = 3;
};

// Replicated synthetic study: every method sees the same data per replicate,
// replicate seeds derive deterministically from the master seed.
struct StudyConfig {
  std::vector<StudyScenario> scenarios;
  std::vector<std::string> methods;
  int replicates = 1;
  RunConfig base;  // shared run settings; penalty/debias come from the method
};

StudyConfig study_config_from_json_text(const std::string& text);
std::string study_config_to_json_text(const StudyConfig& cfg);

struct StudyRow {
  std::string scenario;
  std::string method;
  int replicate = 0;
  std::string metric;
  double value = 0.0;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  // scenario -> method -> metric -> aggregate over replicates
  std::map<std::string, std::map<std::string, std::map<std::string, MeanSe>>> summary;
};

StudyResult run_study(const StudyConfig& cfg);

// Assumption statistics for a design and a candidate signal set.
struct DesignDiagnostics {
  int n = 0;
  int p = 0;
  int n_groups = 0;
  std::vector<int> signal_groups;
  double restricted_eig = 0.0;
  double irrepresentability = 0.0;
};

DesignDiagnostics diagnose_design(const Eigen::MatrixXd& x, const GroupSpec& spec,
                                  const std::vector<int>& signal_groups);
std::string diagnostics_json_text(const DesignDiagnostics& diag);

// Artifact emission. Every file starts with "# seed=..." and "# config=0x..."
// header lines; report.json additionally carries the config echo so it can be
// fed back as a config. Timing values are the only non-deterministic bytes.
std::string report_json_text(const RunConfig& cfg, const RunResult& r);
void write_fit_artifacts(const RunConfig& cfg, const RunResult& r);
void write_additive_artifacts(const RunConfig& cfg, const AdditiveRunResult& r);
void write_study_artifacts(const std::string& out_dir, const StudyConfig& cfg,
                           const StudyResult& r);

// SPARSEPROJ_LOG=1 turns on stage logging to stderr.
bool log_enabled();
void log_stage(const std::string& stage, const std::string& msg);

}  // namespace sparseproj
