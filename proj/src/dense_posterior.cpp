#include "sparseproj/dense_posterior.hpp"

#include <cmath>
#include <stdexcept>
#include <Eigen/Dense>

#include "sparseproj/rng.hpp"

namespace sparseproj {

RidgePosterior fit_ridge_posterior(const GroupedDesign& d, const Eigen::VectorXd& y,
                                   const RidgeConfig& cfg) {
  const Eigen::Index n = d.n(), p = d.p();
  if (y.size() != n) throw std::invalid_argument("fit_ridge_posterior: y has wrong length");
  if (n == 0 || p == 0) throw std::invalid_argument("fit_ridge_posterior: empty design");

  RidgePosterior post;
  post.a_n = cfg.a_n > 0.0 ? cfg.a_n : 1.0 / static_cast<double>(n);
  const double a = post.a_n;

  Eigen::MatrixXd A = d.X.transpose() * d.X;
  A.diagonal().array() += a;
  A = 0.5 * (A + A.transpose()).eval();

  if (p > n) {
    // Dual form: (X^T X + a I)^{-1} X^T = X^T (X X^T + a I)^{-1}.
    Eigen::MatrixXd M = d.X * d.X.transpose();
    M.diagonal().array() += a;
    Eigen::LLT<Eigen::MatrixXd> lltM(0.5 * (M + M.transpose()));
    if (lltM.info() != Eigen::Success)
      throw std::runtime_error("fit_ridge_posterior: dual Cholesky failed");
    post.mean = d.X.transpose() * lltM.solve(y);
    // df = tr X (X^T X + a I)^{-1} X^T = n - a * tr (X X^T + a I)^{-1}.
    Eigen::MatrixXd Linv = lltM.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
    post.df = static_cast<double>(n) - a * Linv.squaredNorm();
  } else {
    Eigen::LLT<Eigen::MatrixXd> lltA(A);
    if (lltA.info() != Eigen::Success)
      throw std::runtime_error("fit_ridge_posterior: primal Cholesky failed");
    post.mean = lltA.solve(d.X.transpose() * y);
    Eigen::MatrixXd Linv = lltA.matrixL().solve(Eigen::MatrixXd::Identity(p, p));
    // df = tr (X^T X + a I)^{-1} X^T X = p - a * tr (X^T X + a I)^{-1}.
    post.df = static_cast<double>(p) - a * Linv.squaredNorm();
  }

  if (cfg.sigma > 0.0) {
    post.sigma = cfg.sigma;
  } else {
    const double rss = (y - d.X * post.mean).squaredNorm();
    const double denom = std::max(static_cast<double>(n) - post.df, 1.0);
    post.sigma = std::sqrt(rss / denom);
    post.sigma_estimated = true;
  }

  // F = sigma * L^{-T} gives F F^T = sigma^2 (X^T X + a I)^{-1}.
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd Linv = llt.matrixL().solve(Eigen::MatrixXd::Identity(p, p));
    post.cov_factor = post.sigma * Linv.transpose();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("fit_ridge_posterior: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-12);
    post.cov_factor =
        post.sigma * es.eigenvectors() * ev.cwiseInverse().cwiseSqrt().asDiagonal();
    post.eig_fallback = true;
  }
  return post;
}

Eigen::MatrixXd sample_posterior(const RidgePosterior& post, int n_draws,
                                 std::uint64_t seed) {
  if (n_draws < 0) throw std::invalid_argument("sample_posterior: negative draw count");
  const Eigen::Index p = post.mean.size();
  Eigen::MatrixXd draws(n_draws, p);
  for (int i = 0; i < n_draws; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    draws.row(i) = (post.mean + post.cov_factor * rng.gaussian_vector(p)).transpose();
  }
  return draws;
}

Eigen::VectorXd posterior_predictive_mean(const GroupedDesign& d,
                                          const RidgePosterior& post) {
  return d.X * post.mean;
}

}  // namespace sparseproj
