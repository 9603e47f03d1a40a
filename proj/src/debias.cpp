#include "sparseproj/debias.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <Eigen/Dense>

#include "sparseproj/rng.hpp"

namespace sparseproj {

namespace {

// Design with group g's columns removed and the remaining groups renumbered.
// col_map[r] is the original column behind reduced column r.
GroupedDesign drop_group(const GroupedDesign& d, int g, std::vector<int>* col_map) {
  const auto& gone = d.group(g);
  const int p = static_cast<int>(d.p());
  std::vector<char> removed(p, 0);
  for (int j : gone) removed[j] = 1;

  std::vector<int> map;
  map.reserve(p - gone.size());
  std::vector<int> new_pos(p, -1);
  for (int j = 0; j < p; ++j)
    if (!removed[j]) {
      new_pos[j] = static_cast<int>(map.size());
      map.push_back(j);
    }

  GroupedDesign red;
  red.X.resize(d.n(), map.size());
  for (std::size_t r = 0; r < map.size(); ++r) red.X.col(r) = d.X.col(map[r]);
  for (int k = 0; k < d.n_groups(); ++k) {
    if (k == g) continue;
    std::vector<int> grp;
    grp.reserve(d.group(k).size());
    for (int j : d.group(k)) grp.push_back(new_pos[j]);
    red.spec.groups.push_back(std::move(grp));
  }
  red.col_center = Eigen::VectorXd::Zero(map.size());
  red.col_scale = Eigen::VectorXd::Ones(map.size());
  red.standardized = d.standardized;
  if (col_map) *col_map = std::move(map);
  return red;
}

}  // namespace

NodewiseFit fit_nodewise(const GroupedDesign& d, int g, const NodewiseOptions& opt) {
  if (g < 0 || g >= d.n_groups())
    throw std::invalid_argument("fit_nodewise: group id out of range");
  if (d.n_groups() < 2)
    throw std::invalid_argument("fit_nodewise: need at least two groups");

  GroupedDesign red = drop_group(d, g, nullptr);
  const Eigen::MatrixXd xg = d.group_cols(g);
  const int pg = static_cast<int>(xg.cols());

  NodewiseFit fit;
  fit.group = g;

  if (opt.lambda == 0.0) {
    // Least-squares limit: regress the block on everything else exactly.
    // Gram of the reduced design must be invertible for the inverse-Gram
    // identity theta * gram = I to hold.
    if (static_cast<Eigen::Index>(red.p()) > d.n())
      throw std::invalid_argument(
          "fit_nodewise: least-squares mode needs at least as many rows as "
          "remaining columns");
    fit.lambda = 0.0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(red.X);
    if (qr.rank() < static_cast<Eigen::Index>(red.p()))
      throw std::invalid_argument(
          "fit_nodewise: least-squares mode needs a full-rank reduced design");
    fit.gamma = qr.solve(xg);
    fit.residual = xg - red.X * fit.gamma;
    fit.max_kkt =
        (2.0 / static_cast<double>(d.n())) *
        (red.X.transpose() * fit.residual).cwiseAbs().maxCoeff();
    fit.converged = true;
    return fit;
  }

  PenaltyConfig pen;
  pen.kind = PenaltyKind::kGroupLasso;
  pen.size_scaled = true;

  if (opt.lambda > 0.0) {
    fit.lambda = opt.lambda;
  } else {
    CvResult cv = cross_validate_lambda(red, xg.col(0), pen, opt.folds, opt.grid_size,
                                        opt.min_ratio,
                                        replicate_seed(opt.seed, 0x6E6F6465u + g),
                                        opt.control);
    fit.lambda = cv.lambda;
  }
  pen.lambda = fit.lambda;

  ProjectionSolver solver(red);
  fit.gamma.resize(red.p(), pg);
  fit.residual.resize(d.n(), pg);
  for (int l = 0; l < pg; ++l) {
    const Eigen::VectorXd target = xg.col(l);
    SolveResult res = solver.solve(target, pen, opt.control);
    fit.gamma.col(l) = res.coef;
    fit.residual.col(l) = target - red.X * res.coef;
    fit.max_kkt = std::max(fit.max_kkt, res.kkt_residual);
    fit.converged = fit.converged && res.converged;
  }
  return fit;
}

ThetaHat build_theta_hat(const GroupedDesign& d, const NodewiseOptions& opt) {
  const int K = d.n_groups();
  const int p = static_cast<int>(d.p());
  if (K < 2) throw std::invalid_argument("build_theta_hat: need at least two groups");

  const Eigen::MatrixXd sigma_hat = gram(d);
  ThetaHat th;
  th.theta.resize(p, p);
  th.t2.resize(K);
  th.lambda.resize(K);

  for (int g = 0; g < K; ++g) {
    NodewiseFit fit = fit_nodewise(d, g, opt);
    th.lambda[g] = fit.lambda;
    th.max_kkt_error = std::max(th.max_kkt_error, fit.max_kkt);
    th.all_converged = th.all_converged && fit.converged;

    const auto& cols_g = d.group(g);
    const int pg = static_cast<int>(cols_g.size());
    const Eigen::MatrixXd xg = d.group_cols(g);
    Eigen::MatrixXd t2 = (xg.transpose() * fit.residual) / static_cast<double>(d.n());
    th.t2[g] = t2;

    // W stacks the identity at block g and -gamma rows elsewhere, so the
    // g rows of theta are (T_g^2)^{-T} W^T.
    std::vector<char> in_g(p, 0);
    for (int j : cols_g) in_g[j] = 1;
    std::vector<int> col_map;
    col_map.reserve(p - pg);
    for (int j = 0; j < p; ++j)
      if (!in_g[j]) col_map.push_back(j);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(p, pg);
    for (int l = 0; l < pg; ++l) w(cols_g[l], l) = 1.0;
    for (std::size_t r = 0; r < col_map.size(); ++r)
      w.row(col_map[r]) = -fit.gamma.row(r);

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(t2.transpose());
    if (!(lu.rcond() > 1e-13))
      throw std::runtime_error(
          "build_theta_hat: residual cross-moment block is numerically "
          "singular");
    Eigen::MatrixXd rows = lu.solve(w.transpose());
    for (int l = 0; l < pg; ++l) th.theta.row(cols_g[l]) = rows.row(l);

    // Diagonal block of theta * gram, which should be the identity exactly.
    Eigen::MatrixXd diag_block(pg, pg);
    Eigen::MatrixXd sig_cols(p, pg);
    for (int l = 0; l < pg; ++l) sig_cols.col(l) = sigma_hat.col(cols_g[l]);
    diag_block = rows * sig_cols;
    diag_block.diagonal().array() -= 1.0;
    th.max_diag_error = std::max(th.max_diag_error, diag_block.cwiseAbs().maxCoeff());
  }
  return th;
}

Eigen::MatrixXd debias_draws(const GroupedDesign& d, const ThetaHat& theta,
                             const Eigen::MatrixXd& draws,
                             const Eigen::MatrixXd& projected) {
  if (draws.rows() != projected.rows() || draws.cols() != projected.cols())
    throw std::invalid_argument("debias_draws: shape mismatch");
  if (draws.cols() != d.p())
    throw std::invalid_argument("debias_draws: width mismatch with design");
  const Eigen::MatrixXd correction = theta.theta * gram(d);
  return projected + (draws - projected) * correction.transpose();
}

Eigen::VectorXd debiased_group_lasso(const GroupedDesign& d, const ThetaHat& theta,
                                     const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& gl_coef) {
  const Eigen::VectorXd resid = y - d.X * gl_coef;
  return gl_coef + theta.theta * (d.X.transpose() * resid) / static_cast<double>(d.n());
}

CredibleBand credible_intervals(const Eigen::MatrixXd& samples, double level) {
  if (samples.rows() < 1) throw std::invalid_argument("credible_intervals: no samples");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("credible_intervals: level must be in (0,1)");
  const Eigen::Index n_draws = samples.rows(), p = samples.cols();
  const double q_lo = (1.0 - level) / 2.0, q_hi = (1.0 + level) / 2.0;

  auto type7 = [n_draws](const std::vector<double>& sorted, double q) {
    if (n_draws == 1) return sorted[0];
    const double h = q * static_cast<double>(n_draws - 1);
    const Eigen::Index i = std::min(static_cast<Eigen::Index>(std::floor(h)), n_draws - 2);
    const double frac = h - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
  };

  CredibleBand band;
  band.level = level;
  band.lower.resize(p);
  band.upper.resize(p);
  std::vector<double> col(n_draws);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < n_draws; ++i) col[i] = samples(i, j);
    std::sort(col.begin(), col.end());
    band.lower[j] = type7(col, q_lo);
    band.upper[j] = type7(col, q_hi);
  }
  return band;
}

BvmDiagnostic bvm_diagnostic(const GroupedDesign& d, const RidgePosterior& post,
                             const ThetaHat& theta, const Eigen::MatrixXd& debiased,
                             const Eigen::VectorXd& center) {
  const Eigen::Index n = d.n(), p = d.p(), n_draws = debiased.rows();
  if (center.size() != p) throw std::invalid_argument("bvm_diagnostic: center size");
  if (n_draws < 2) throw std::invalid_argument("bvm_diagnostic: need several draws");
  const double sigma = post.sigma;
  const double root_n = std::sqrt(static_cast<double>(n));

  BvmDiagnostic diag;
  Eigen::MatrixXd z = (debiased.rowwise() - center.transpose()) * (root_n / sigma);
  diag.empirical_mean = z.colwise().mean().transpose();
  diag.empirical_var =
      (z.rowwise() - diag.empirical_mean.transpose()).colwise().squaredNorm().transpose() /
      static_cast<double>(n_draws - 1);

  const Eigen::VectorXd mu = d.X * (post.mean - center);
  diag.theory_mean = theta.theta * (d.X.transpose() * mu) / (sigma * root_n);

  // V = n^-1 theta X^T H X theta^T with H the ridge hat matrix. The stored
  // factor gives (X^T X + a I)^{-1} = F F^T / sigma^2.
  Eigen::MatrixXd w = d.X * theta.theta.transpose();
  Eigen::MatrixXd inner =
      (post.cov_factor.transpose() * (d.X.transpose() * w)) / sigma;
  diag.theory_var =
      inner.colwise().squaredNorm().transpose() / static_cast<double>(n);

  for (Eigen::Index j = 0; j < p; ++j) {
    const double se = std::sqrt(diag.empirical_var[j] / static_cast<double>(n_draws));
    if (se > 0.0) {
      const double t = std::abs(diag.empirical_mean[j] - diag.theory_mean[j]) / se;
      diag.max_mean_discrepancy_se = std::max(diag.max_mean_discrepancy_se, t);
    }
    if (diag.theory_var[j] > 1e-12) {
      const double r = std::abs(diag.empirical_var[j] / diag.theory_var[j] - 1.0);
      diag.max_var_ratio_error = std::max(diag.max_var_ratio_error, r);
    }
  }
  return diag;
}

double debias_correction_stat(const GroupedDesign& d, const ThetaHat& theta,
                              const Eigen::MatrixXd& projected,
                              const Eigen::VectorXd& beta0) {
  const Eigen::Index n_draws = projected.rows();
  if (n_draws == 0) throw std::invalid_argument("debias_correction_stat: no draws");
  Eigen::MatrixXd a = theta.theta * gram(d);
  a.diagonal().array() -= 1.0;
  const double root_n = std::sqrt(static_cast<double>(d.n()));

  std::vector<double> stats(n_draws);
  for (Eigen::Index i = 0; i < n_draws; ++i) {
    const Eigen::VectorXd delta = a * (projected.row(i).transpose() - beta0);
    double worst = 0.0;
    for (int k = 0; k < d.n_groups(); ++k) {
      double s2 = 0.0;
      for (int j : d.group(k)) s2 += delta[j] * delta[j];
      worst = std::max(worst, s2);
    }
    stats[i] = root_n * std::sqrt(worst);
  }
  std::sort(stats.begin(), stats.end());
  const std::size_t m = stats.size();
  return m % 2 == 1 ? stats[m / 2] : 0.5 * (stats[m / 2 - 1] + stats[m / 2]);
}

}  // namespace sparseproj
