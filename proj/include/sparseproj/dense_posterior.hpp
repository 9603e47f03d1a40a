#pragma once

#include <cstdint>
#include "sparseproj/grouped_design.hpp"

namespace sparseproj {

struct RidgeConfig {
  // Ridge offset added to X^T X. Non-positive means use the default 1/n.
  double a_n = 0.0;
  // Noise standard deviation. Non-positive means estimate it from the ridge
  // residuals: sigma^2 = ||y - X b||^2 / max(n - df, 1).
  double sigma = 0.0;
};

// Gaussian posterior N(mean, F F^T) for the coefficients of y on X under a
// conjugate ridge prior.
struct RidgePosterior {
  Eigen::VectorXd mean;      // (X^T X + a_n I)^{-1} X^T y
  Eigen::MatrixXd cov_factor;  // F with F F^T = sigma^2 (X^T X + a_n I)^{-1}
  double sigma = 1.0;
  double a_n = 0.0;
  double df = 0.0;  // trace of the ridge hat matrix, in [0, min(n, p)]
  bool sigma_estimated = false;
  bool eig_fallback = false;  // Cholesky failed, eigendecomposition was used
};

// Fits the ridge posterior. The mean solve uses the n x n dual form
// X^T (X X^T + a_n I)^{-1} y when p > n. The covariance factor comes from a
// triangular solve against the Cholesky factor of X^T X + a_n I; if that
// factorization fails the factor is rebuilt from an eigendecomposition with
// eigenvalues floored at 1e-12.
RidgePosterior fit_ridge_posterior(const GroupedDesign& d, const Eigen::VectorXd& y,
                                   const RidgeConfig& cfg = {});

// D x p matrix whose row i is mean + F z_i with z_i standard normal read from
// the counter stream (seed, i). Row i is identical no matter how many draws
// are requested or in which order rows are filled.
Eigen::MatrixXd sample_posterior(const RidgePosterior& post, int n_draws,
                                 std::uint64_t seed);

// X * mean.
Eigen::VectorXd posterior_predictive_mean(const GroupedDesign& d,
                                          const RidgePosterior& post);

}  // namespace sparseproj
