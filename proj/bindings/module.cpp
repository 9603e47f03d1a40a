#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sparseproj/pipeline.hpp"

namespace py = pybind11;

namespace {

sparseproj::RunConfig make_config(std::uint64_t seed, const std::string& penalty,
                                  const py::object& lam, double tau, int draws,
                                  int folds, int grid, bool debias, double level,
                                  bool standardize, int jobs, double a_n, double sigma,
                                  double tol, int max_iter, double nodewise_lambda) {
  sparseproj::RunConfig cfg;
  cfg.seed = seed;
  cfg.seed_set = true;
  bool ignored = false;
  sparseproj::parse_method(penalty, &cfg.penalty, &ignored);
  if (py::isinstance<py::str>(lam)) {
    if (lam.cast<std::string>() != "cv")
      throw py::value_error("lam must be \"cv\" or a positive number");
    cfg.lambda_cv = true;
  } else {
    cfg.lambda_cv = false;
    cfg.lambda = lam.cast<double>();
  }
  cfg.tau = tau;
  cfg.draws = draws;
  cfg.folds = folds;
  cfg.grid_size = grid;
  cfg.debias = debias;
  cfg.level = level;
  cfg.standardize = standardize;
  cfg.jobs = jobs;
  cfg.a_n = a_n;
  cfg.sigma = sigma;
  cfg.tol = tol;
  cfg.max_iter = max_iter;
  cfg.nodewise_lambda = nodewise_lambda;
  return cfg;
}

py::dict result_dict(const sparseproj::RunResult& r) {
  py::dict out;
  out["coef"] = r.point_estimate;
  out["intercept"] = r.intercept;
  out["penalized"] = r.penalized_fit;
  if (r.debiased_fit.size() > 0)
    out["debiased"] = r.debiased_fit;
  else
    out["debiased"] = py::none();
  out["selected"] = r.selected;
  out["frequency"] = r.frequency;
  out["lower"] = r.band.lower;
  out["upper"] = r.band.upper;
  out["lam"] = r.lambda;
  out["sigma"] = r.sigma;
  out["draws"] = r.draws;
  out["projected"] = r.projected;
  out["converged"] = r.projection_converged && r.debias_converged;
  return out;
}

py::dict fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
             const std::vector<int>& sizes, std::uint64_t seed,
             const std::string& penalty, const py::object& lam, double tau, int draws,
             int folds, int grid, bool debias, double level, bool standardize, int jobs,
             double a_n, double sigma, double tol, int max_iter,
             double nodewise_lambda) {
  const sparseproj::RunConfig cfg =
      make_config(seed, penalty, lam, tau, draws, folds, grid, debias, level,
                  standardize, jobs, a_n, sigma, tol, max_iter, nodewise_lambda);
  const sparseproj::GroupSpec spec = sparseproj::GroupSpec::contiguous(sizes);
  return result_dict(sparseproj::run_fit(x, y, spec, cfg));
}

py::dict fit_additive(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int n_basis,
                      int degree, std::uint64_t seed, const std::string& penalty,
                      const py::object& lam, double tau, int draws, int folds, int grid,
                      bool debias, double level, int jobs, double a_n, double sigma,
                      double tol, int max_iter) {
  sparseproj::RunConfig cfg =
      make_config(seed, penalty, lam, tau, draws, folds, grid, debias, level,
                  /*standardize=*/false, jobs, a_n, sigma, tol, max_iter,
                  /*nodewise_lambda=*/-1.0);
  cfg.mode = "additive";
  cfg.n_basis = n_basis;
  cfg.degree = degree;
  const sparseproj::AdditiveRunResult r = sparseproj::run_additive(x, y, cfg);
  py::dict out = result_dict(r.fit);
  out["fitted"] = r.fitted;
  out["expanded_p"] = r.expanded_p;
  py::list components;
  for (const auto& c : r.components) {
    py::dict entry;
    entry["var"] = c.var;
    entry["x"] = c.x;
    entry["estimate"] = c.estimate;
    entry["lower"] = c.lower;
    entry["upper"] = c.upper;
    components.append(entry);
  }
  out["components"] = components;
  return out;
}

py::dict group_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const std::vector<int>& sizes, double lam, bool size_scaled) {
  const sparseproj::GroupedDesign d =
      sparseproj::make_design(x, sparseproj::GroupSpec::contiguous(sizes));
  const sparseproj::SolveResult r = sparseproj::fit_group_lasso(d, y, lam, {}, size_scaled);
  py::dict out;
  out["coef"] = r.coef;
  out["objective"] = r.objective;
  out["kkt"] = r.kkt_residual;
  out["iterations"] = r.iterations;
  out["converged"] = r.converged;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "grouped-sparse Bayesian regression via projected posterior draws";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const sparseproj::StageError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("version", [] { return std::string(sparseproj::kVersion); },
        "library version string");

  m.def("fit", &fit, py::arg("x"), py::arg("y"), py::arg("sizes"), py::kw_only(),
        py::arg("seed"), py::arg("penalty") = "gl", py::arg("lam") = py::str("cv"),
        py::arg("tau") = 3.7, py::arg("draws") = 200, py::arg("folds") = 5,
        py::arg("grid") = 50, py::arg("debias") = false, py::arg("level") = 0.95,
        py::arg("standardize") = true, py::arg("jobs") = 1, py::arg("a_n") = 0.0,
        py::arg("sigma") = 0.0, py::arg("tol") = 1e-7, py::arg("max_iter") = 10000,
        py::arg("nodewise_lambda") = -1.0,
        "sample the ridge posterior, project every draw through the grouped penalty,\n"
        "and summarize selection, estimates, and credible intervals");

  m.def("fit_additive", &fit_additive, py::arg("x"), py::arg("y"), py::kw_only(),
        py::arg("n_basis") = 8, py::arg("degree") = 3, py::arg("seed"),
        py::arg("penalty") = "gl", py::arg("lam") = py::str("cv"), py::arg("tau") = 3.7,
        py::arg("draws") = 200, py::arg("folds") = 5, py::arg("grid") = 50,
        py::arg("debias") = false, py::arg("level") = 0.95, py::arg("jobs") = 1,
        py::arg("a_n") = 0.0, py::arg("sigma") = 0.0, py::arg("tol") = 1e-7,
        py::arg("max_iter") = 10000,
        "expand covariates into centered B-spline groups and run the fit pipeline");

  m.def("group_lasso", &group_lasso, py::arg("x"), py::arg("y"), py::arg("sizes"),
        py::arg("lam"), py::arg("size_scaled") = true,
        "group lasso fit at a fixed penalty level");
}
