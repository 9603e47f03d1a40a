#include "sparseproj/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>
#include <Eigen/Dense>

#include "sparseproj/rng.hpp"

namespace sparseproj {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Effective per-group threshold scale: lambda * s_k (* w_k for adaptive).
// Returns +inf for pinned groups, 0 when lambda is 0.
double group_scale(const PenaltyConfig& pen, int k, double sqrt_size) {
  if (pen.lambda == 0.0) return 0.0;
  double t = pen.lambda * (pen.size_scaled ? sqrt_size : 1.0);
  if (pen.kind == PenaltyKind::kAdaptiveGroupLasso) t *= pen.weights[k];
  return t;
}

double group_penalty_value(const PenaltyConfig& pen, double scale, double s) {
  if (scale == 0.0) return 0.0;
  if (pen.kind == PenaltyKind::kGroupScad) return scad_penalty(s, scale, pen.tau);
  if (std::isinf(scale)) return s > 0.0 ? kInf : 0.0;
  return scale * s;
}

double group_penalty_derivative(const PenaltyConfig& pen, double scale, double s) {
  if (pen.kind == PenaltyKind::kGroupScad) return scad_derivative(s, scale, pen.tau);
  return scale;
}

}  // namespace

void PenaltyConfig::validate(int n_groups) const {
  if (lambda < 0.0 || !std::isfinite(lambda))
    throw std::invalid_argument("penalty: lambda must be finite and >= 0");
  if (kind == PenaltyKind::kGroupScad && !(tau > 2.0))
    throw std::invalid_argument("penalty: SCAD tau must exceed 2");
  if (kind == PenaltyKind::kAdaptiveGroupLasso) {
    if (weights.size() != n_groups)
      throw std::invalid_argument("penalty: need one adaptive weight per group");
    for (Eigen::Index k = 0; k < weights.size(); ++k)
      if (!(weights[k] > 0.0))
        throw std::invalid_argument("penalty: adaptive weights must be positive");
  }
}

double scad_penalty(double t, double lambda, double tau) {
  t = std::abs(t);
  if (lambda == 0.0) return 0.0;
  if (t <= lambda) return lambda * t;
  if (t <= tau * lambda)
    return (2.0 * tau * lambda * t - t * t - lambda * lambda) / (2.0 * (tau - 1.0));
  return lambda * lambda * (tau + 1.0) / 2.0;
}

double scad_derivative(double t, double lambda, double tau) {
  t = std::abs(t);
  if (lambda == 0.0) return 0.0;
  if (t < lambda) return lambda;
  return std::max(tau * lambda - t, 0.0) / (tau - 1.0);
}

double scad_threshold(double z, double lambda, double tau) {
  z = std::abs(z);
  if (lambda == 0.0) return z;
  if (z <= 0.5 * lambda) return 0.0;
  if (z <= 1.5 * lambda) return z - 0.5 * lambda;
  if (z <= tau * lambda)
    return (2.0 * (tau - 1.0) * z - tau * lambda) / (2.0 * tau - 3.0);
  return z;
}

Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& v, double t) {
  const double norm = v.norm();
  if (norm <= t || norm == 0.0) return Eigen::VectorXd::Zero(v.size());
  return v * (1.0 - t / norm);
}

ProjectionSolver::ProjectionSolver(const GroupedDesign& d) : d_(&d) {
  const double n = static_cast<double>(d.n());
  blocks_.resize(d.n_groups());
  for (int k = 0; k < d.n_groups(); ++k) {
    Block& blk = blocks_[k];
    blk.cols = d.group(k);
    blk.sqrt_size = std::sqrt(static_cast<double>(blk.cols.size()));
    blk.x = d.group_cols(k);
    Eigen::MatrixXd a = (2.0 / n) * (blk.x.transpose() * blk.x);
    a = 0.5 * (a + a.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("block gram eigendecomposition failed");
    blk.q = es.eigenvectors();
    blk.eigvals = es.eigenvalues().cwiseMax(0.0);
  }
}

namespace {

// ||(L + mu I)^{-1} c|| for the diagonal L, with guards against 0/0.
double shrunk_norm(const Eigen::VectorXd& eig, const Eigen::VectorXd& c, double mu) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    const double den = std::max(eig[j] + mu, 1e-300);
    const double t = c[j] / den;
    s += t * t;
  }
  return std::sqrt(s);
}

// Unique positive root of mu * ||(L + mu I)^{-1} c|| = w, assuming ||c|| > w.
// Safeguarded Newton with bisection fallback; scalar tolerance 1e-10.
double group_lasso_root(const Eigen::VectorXd& eig, const Eigen::VectorXd& c, double w) {
  auto phi = [&](double mu) { return mu * shrunk_norm(eig, c, mu) - w; };
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200 && phi(hi) < 0.0; ++i) hi *= 2.0;
  double mu = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double h = shrunk_norm(eig, c, mu);
    const double f = mu * h - w;
    if (f > 0.0) hi = mu; else lo = mu;
    if (hi - lo <= 1e-10 * std::max(1.0, hi) || std::abs(f) <= 1e-14 * std::max(1.0, w))
      break;
    // phi'(mu) = h + mu h', h' = -sum c^2 (eig+mu)^{-3} / h.
    double hp = 0.0;
    for (Eigen::Index j = 0; j < c.size(); ++j) {
      const double den = std::max(eig[j] + mu, 1e-300);
      hp -= c[j] * c[j] / (den * den * den);
    }
    hp = h > 0.0 ? hp / h : 0.0;
    const double dphi = h + mu * hp;
    double next = dphi > 0.0 ? mu - f / dphi : mu;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    mu = next;
  }
  return mu;
}

// Least-squares coordinates c_j / eig_j with small eigenvalues zeroed.
Eigen::VectorXd pinv_coords(const Eigen::VectorXd& eig, const Eigen::VectorXd& c) {
  const double cutoff = 1e-12 * std::max(eig.size() ? eig.maxCoeff() : 0.0, 0.0);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(c.size());
  for (Eigen::Index j = 0; j < c.size(); ++j)
    if (eig[j] > cutoff && eig[j] > 0.0) y[j] = c[j] / eig[j];
  return y;
}

}  // namespace

// Exact minimizer of 0.5 u^T A u - b^T u + P(||u||) for one block, where
// A = (2/n) Xk^T Xk = Q diag(eig) Q^T. Every nonzero stationary point solves
// (A + mu I) u = b with mu = P'(||u||) / ||u||, so candidates are enumerated
// per penalty segment in mu and compared by objective value.
Eigen::VectorXd ProjectionSolver::block_minimize(const Block& blk, const Eigen::VectorXd& b,
                                                 const PenaltyConfig& pen, int k) const {
  const Eigen::Index m = b.size();
  const double scale = group_scale(pen, k, blk.sqrt_size);
  if (std::isinf(scale)) return Eigen::VectorXd::Zero(m);
  const Eigen::VectorXd c = blk.q.transpose() * b;

  if (scale == 0.0) return blk.q * pinv_coords(blk.eigvals, c);

  if (pen.kind != PenaltyKind::kGroupScad) {
    if (c.norm() <= scale) return Eigen::VectorXd::Zero(m);
    const double mu = group_lasso_root(blk.eigvals, c, scale);
    Eigen::VectorXd y(m);
    for (Eigen::Index j = 0; j < m; ++j) y[j] = c[j] / (blk.eigvals[j] + mu);
    return blk.q * y;
  }

  // SCAD. Objective in eigencoordinates: 0.5 sum eig y^2 - c.y + scad(||y||).
  const double lam = scale, tau = pen.tau;
  auto coords_at = [&](double mu) {
    Eigen::VectorXd y(m);
    for (Eigen::Index j = 0; j < m; ++j)
      y[j] = c[j] / std::max(blk.eigvals[j] + mu, 1e-300);
    return y;
  };
  auto objective_of = [&](const Eigen::VectorXd& y) {
    double quad = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) quad += 0.5 * blk.eigvals[j] * y[j] * y[j];
    return quad - c.dot(y) + scad_penalty(y.norm(), lam, tau);
  };

  double best_obj = 0.0;  // u = 0
  Eigen::VectorXd best = Eigen::VectorXd::Zero(m);
  auto consider = [&](const Eigen::VectorXd& y) {
    const double obj = objective_of(y);
    if (obj < best_obj) {
      best_obj = obj;
      best = blk.q * y;
    }
  };

  // Inner segment, ||u|| <= lam: P' = lam, same root as the group lasso.
  if (c.norm() > lam) {
    const double mu = group_lasso_root(blk.eigvals, c, lam);
    Eigen::VectorXd y = coords_at(mu);
    if (y.norm() <= lam * (1.0 + 1e-9)) consider(y);
  }
  // Transition band, lam < ||u|| <= tau*lam: mu = (tau*lam - s) / ((tau-1) s)
  // runs over [0, 1]; stationarity is h(mu) = tau*lam / ((tau-1) mu + 1).
  {
    auto f = [&](double mu) {
      return shrunk_norm(blk.eigvals, c, mu) - tau * lam / ((tau - 1.0) * mu + 1.0);
    };
    const int cells = 64;
    double prev_mu = 0.0, prev_f = f(0.0);
    for (int i = 1; i <= cells; ++i) {
      const double cur_mu = static_cast<double>(i) / cells;
      const double cur_f = f(cur_mu);
      if ((prev_f <= 0.0 && cur_f >= 0.0) || (prev_f >= 0.0 && cur_f <= 0.0)) {
        double lo = prev_mu, hi = cur_mu, flo = prev_f;
        for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
          const double mid = 0.5 * (lo + hi);
          const double fm = f(mid);
          if ((flo <= 0.0) == (fm <= 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        const double mu = 0.5 * (lo + hi);
        Eigen::VectorXd y = coords_at(mu);
        const double s = y.norm();
        if (s >= lam * (1.0 - 1e-9) && s <= tau * lam * (1.0 + 1e-9)) consider(y);
      }
      prev_mu = cur_mu;
      prev_f = cur_f;
    }
  }
  // Flat segment, ||u|| > tau*lam: unpenalized least squares.
  {
    Eigen::VectorXd y = pinv_coords(blk.eigvals, c);
    if (y.norm() >= tau * lam * (1.0 - 1e-9)) consider(y);
  }
  return best;
}

SolveResult ProjectionSolver::solve(const Eigen::VectorXd& target, const PenaltyConfig& pen,
                                    const SolveControl& ctl,
                                    const Eigen::VectorXd* init) const {
  const GroupedDesign& d = *d_;
  const Eigen::Index n = d.n(), p = d.p();
  if (target.size() != n) throw std::invalid_argument("solve: target has wrong length");
  pen.validate(d.n_groups());
  if (init && init->size() != p) throw std::invalid_argument("solve: init has wrong length");

  const double inv_n2 = 2.0 / static_cast<double>(n);
  Eigen::VectorXd u = init ? *init : Eigen::VectorXd::Zero(p);
  // Pinned groups stay at zero throughout.
  for (int k = 0; k < d.n_groups(); ++k)
    if (std::isinf(group_scale(pen, k, blocks_[k].sqrt_size)))
      for (int j : blocks_[k].cols) u[j] = 0.0;

  Eigen::VectorXd r = target - d.X * u;
  SolveResult out;
  Eigen::VectorXd uk, b, uk_new;
  for (int iter = 1; iter <= ctl.max_iter; ++iter) {
    double max_rel = 0.0;
    for (int k = 0; k < d.n_groups(); ++k) {
      const Block& blk = blocks_[k];
      if (std::isinf(group_scale(pen, k, blk.sqrt_size))) continue;
      const Eigen::Index m = static_cast<Eigen::Index>(blk.cols.size());
      uk.resize(m);
      for (Eigen::Index j = 0; j < m; ++j) uk[j] = u[blk.cols[j]];
      const bool was_zero = uk.isZero(0.0);
      if (!was_zero) r.noalias() += blk.x * uk;  // partial residual without block k
      b.noalias() = inv_n2 * (blk.x.transpose() * r);
      uk_new = block_minimize(blk, b, pen, k);
      if (!uk_new.isZero(0.0)) r.noalias() -= blk.x * uk_new;
      const double delta = (uk_new - uk).norm();
      max_rel = std::max(max_rel, delta / std::max(1.0, uk_new.norm()));
      for (Eigen::Index j = 0; j < m; ++j) u[blk.cols[j]] = uk_new[j];
    }
    out.iterations = iter;
    if (iter % 50 == 0) r = target - d.X * u;  // shed accumulated roundoff
    if (max_rel < ctl.tol) {
      out.kkt_residual = kkt_residual(d, target, pen, u);
      if (out.kkt_residual < ctl.tol) {
        out.converged = true;
        break;
      }
    }
  }
  out.coef = std::move(u);
  if (!out.converged)
    out.kkt_residual = kkt_residual(d, target, pen, out.coef);
  out.objective = penalized_objective(d, target, pen, out.coef);
  return out;
}

SolveResult solve_penalized_ls(const GroupedDesign& d, const Eigen::VectorXd& target,
                               const PenaltyConfig& pen, const SolveControl& ctl,
                               const Eigen::VectorXd* init) {
  return ProjectionSolver(d).solve(target, pen, ctl, init);
}

double penalized_objective(const GroupedDesign& d, const Eigen::VectorXd& target,
                           const PenaltyConfig& pen, const Eigen::VectorXd& u) {
  pen.validate(d.n_groups());
  double obj = (target - d.X * u).squaredNorm() / static_cast<double>(d.n());
  for (int k = 0; k < d.n_groups(); ++k) {
    double s2 = 0.0;
    for (int j : d.group(k)) s2 += u[j] * u[j];
    const double sqrt_size = std::sqrt(static_cast<double>(d.group(k).size()));
    obj += group_penalty_value(pen, group_scale(pen, k, sqrt_size), std::sqrt(s2));
  }
  return obj;
}

double kkt_residual(const GroupedDesign& d, const Eigen::VectorXd& target,
                    const PenaltyConfig& pen, const Eigen::VectorXd& u) {
  pen.validate(d.n_groups());
  const Eigen::VectorXd v =
      (2.0 / static_cast<double>(d.n())) * (d.X.transpose() * (target - d.X * u));
  double worst = 0.0;
  for (int k = 0; k < d.n_groups(); ++k) {
    const auto& cols = d.group(k);
    const double sqrt_size = std::sqrt(static_cast<double>(cols.size()));
    const double scale = group_scale(pen, k, sqrt_size);
    double s2 = 0.0, vk2 = 0.0;
    for (int j : cols) {
      s2 += u[j] * u[j];
      vk2 += v[j] * v[j];
    }
    const double s = std::sqrt(s2);
    double res;
    if (std::isinf(scale)) {
      res = s > 0.0 ? kInf : 0.0;
    } else if (s > 0.0) {
      const double dp = group_penalty_derivative(pen, scale, s);
      double acc = 0.0;
      for (int j : cols) {
        const double t = v[j] - dp * u[j] / s;
        acc += t * t;
      }
      res = std::sqrt(acc);
    } else {
      res = std::max(std::sqrt(vk2) - scale, 0.0);
    }
    worst = std::max(worst, res);
  }
  return worst;
}

double lambda_max(const GroupedDesign& d, const Eigen::VectorXd& y,
                  const PenaltyConfig& pen) {
  const Eigen::VectorXd v =
      (2.0 / static_cast<double>(d.n())) * (d.X.transpose() * y);
  double lmax = 0.0;
  for (int k = 0; k < d.n_groups(); ++k) {
    const auto& cols = d.group(k);
    double s2 = 0.0;
    for (int j : cols) s2 += v[j] * v[j];
    double denom = pen.size_scaled ? std::sqrt(static_cast<double>(cols.size())) : 1.0;
    if (pen.kind == PenaltyKind::kAdaptiveGroupLasso) {
      if (std::isinf(pen.weights[k])) continue;
      denom *= pen.weights[k];
    }
    lmax = std::max(lmax, std::sqrt(s2) / denom);
  }
  return lmax;
}

SolveResult fit_group_lasso(const GroupedDesign& d, const Eigen::VectorXd& y,
                            double lambda, const SolveControl& ctl, bool size_scaled) {
  PenaltyConfig pen;
  pen.kind = PenaltyKind::kGroupLasso;
  pen.lambda = lambda;
  pen.size_scaled = size_scaled;
  return solve_penalized_ls(d, y, pen, ctl);
}

Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& pilot, const GroupSpec& spec) {
  if (pilot.size() != spec.n_cols())
    throw std::invalid_argument("adaptive_weights: pilot has wrong length");
  Eigen::VectorXd w(spec.n_groups());
  for (int k = 0; k < spec.n_groups(); ++k) {
    double s2 = 0.0;
    for (int j : spec.groups[k]) s2 += pilot[j] * pilot[j];
    w[k] = s2 > 0.0 ? 1.0 / std::sqrt(s2) : kInf;
  }
  return w;
}

CvResult cross_validate_lambda(const GroupedDesign& d, const Eigen::VectorXd& y,
                               const PenaltyConfig& pen, int folds, int grid_size,
                               double min_ratio, std::uint64_t seed,
                               const SolveControl& ctl) {
  const int n = static_cast<int>(d.n());
  if (folds < 2 || folds > n)
    throw std::invalid_argument("cross_validate_lambda: folds must be in 2..n");
  if (grid_size < 2) throw std::invalid_argument("cross_validate_lambda: grid too small");
  if (!(min_ratio > 0.0 && min_ratio < 1.0))
    throw std::invalid_argument("cross_validate_lambda: min_ratio must be in (0,1)");
  pen.validate(d.n_groups());

  CvResult out;
  const double lmax = lambda_max(d, y, pen);
  out.grid.resize(grid_size);
  for (int g = 0; g < grid_size; ++g)
    out.grid[g] =
        lmax * std::exp(std::log(min_ratio) * static_cast<double>(g) / (grid_size - 1));
  out.cv_error = Eigen::VectorXd::Zero(grid_size);
  if (lmax <= 0.0) {  // degenerate: y carries no signal for any group
    out.lambda = 0.0;
    return out;
  }

  // Seeded shuffle, then near-equal contiguous chunks of the shuffled order.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(seed, rng_stream::kFoldShuffle);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  const int base = n / folds, extra = n % folds;

  int offset = 0;
  for (int f = 0; f < folds; ++f) {
    const int fold_size = base + (f < extra ? 1 : 0);
    std::vector<int> test_rows(order.begin() + offset, order.begin() + offset + fold_size);
    offset += fold_size;
    std::vector<char> in_test(n, 0);
    for (int i : test_rows) in_test[i] = 1;
    std::vector<int> train_rows;
    train_rows.reserve(n - fold_size);
    for (int i = 0; i < n; ++i)
      if (!in_test[i]) train_rows.push_back(i);
    std::sort(test_rows.begin(), test_rows.end());

    GroupedDesign dtrain = d.subset_rows(train_rows);
    Eigen::VectorXd ytrain(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) ytrain[i] = y[train_rows[i]];
    Eigen::MatrixXd xtest(test_rows.size(), d.p());
    Eigen::VectorXd ytest(test_rows.size());
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      xtest.row(i) = d.X.row(test_rows[i]);
      ytest[i] = y[test_rows[i]];
    }

    ProjectionSolver solver(dtrain);
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(d.p());
    PenaltyConfig pg = pen;
    for (int g = 0; g < grid_size; ++g) {
      pg.lambda = out.grid[g];
      SolveResult res = solver.solve(ytrain, pg, ctl, &warm);
      warm = res.coef;
      out.cv_error[g] += (ytest - xtest * warm).squaredNorm();
    }
  }
  out.cv_error /= static_cast<double>(n);

  int best = 0;
  for (int g = 1; g < grid_size; ++g)
    if (out.cv_error[g] < out.cv_error[best]) best = g;
  out.best_index = best;
  out.lambda = out.grid[best];
  return out;
}

Eigen::MatrixXd project_draws(const GroupedDesign& d, const Eigen::MatrixXd& draws,
                              const PenaltyConfig& pen, const SolveControl& ctl,
                              int jobs, std::vector<SolveResult>* reports) {
  if (draws.cols() != d.p())
    throw std::invalid_argument("project_draws: draws have wrong width");
  const int n_draws = static_cast<int>(draws.rows());
  Eigen::MatrixXd out(n_draws, d.p());
  if (reports) reports->assign(n_draws, SolveResult{});
  if (n_draws == 0) return out;

  const ProjectionSolver solver(d);
  auto run_range = [&](int lo, int hi) {
    Eigen::VectorXd beta, target;
    for (int i = lo; i < hi; ++i) {
      beta = draws.row(i).transpose();
      target.noalias() = d.X * beta;
      SolveResult res = solver.solve(target, pen, ctl, &beta);
      out.row(i) = res.coef.transpose();
      if (reports) (*reports)[i] = std::move(res);
    }
  };

  jobs = std::max(1, std::min(jobs, n_draws));
  if (jobs == 1) {
    run_range(0, n_draws);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    const int chunk = (n_draws + jobs - 1) / jobs;
    for (int t = 0; t < jobs; ++t) {
      const int lo = t * chunk, hi = std::min(n_draws, lo + chunk);
      if (lo < hi) pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace sparseproj
