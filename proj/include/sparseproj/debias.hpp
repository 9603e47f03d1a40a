#pragma once

#include <cstdint>
#include <vector>
#include <Eigen/Core>

#include "sparseproj/dense_posterior.hpp"
#include "sparseproj/grouped_design.hpp"
#include "sparseproj/projection.hpp"

namespace sparseproj {

struct NodewiseOptions {
  // < 0: pick by cross validation on the first column of each block.
  // = 0: least-squares limit, an exact linear regression of the block on the
  //      remaining columns; requires the reduced design to have full column
  //      rank, and then theta * gram = I exactly.
  // > 0: use this penalty level for every block.
  double lambda = -1.0;
  int folds = 5;
  int grid_size = 20;
  double min_ratio = 1e-3;
  std::uint64_t seed = 0;
  SolveControl control;
};

// Group lasso regressions of each column of block g on the remaining columns,
// all at one shared penalty level.
struct NodewiseFit {
  int group = 0;
  double lambda = 0.0;
  Eigen::MatrixXd gamma;     // (p - p_g) x p_g; column l explains column l of the block
  Eigen::MatrixXd residual;  // n x p_g
  double max_kkt = 0.0;      // worst stationarity residual across the p_g fits
  bool converged = true;
};

NodewiseFit fit_nodewise(const GroupedDesign& d, int g, const NodewiseOptions& opt);

// Relaxed inverse of the gram matrix assembled from the nodewise fits. Row
// block g is (T_g^2)^{-T} [ -Gamma_{g,1}^T ... I ... -Gamma_{g,K}^T ] with
// T_g^2 = n^-1 Xg^T Rg, which makes the diagonal blocks of theta * gram equal
// the identity up to solve accuracy.
struct ThetaHat {
  Eigen::MatrixXd theta;            // p x p
  std::vector<Eigen::MatrixXd> t2;  // per group, n^-1 Xg^T Rg
  Eigen::VectorXd lambda;           // per group nodewise penalty level
  double max_diag_error = 0.0;      // diagonal blocks of theta * gram minus I
  double max_kkt_error = 0.0;       // worst nodewise stationarity residual
  bool all_converged = true;
};

ThetaHat build_theta_hat(const GroupedDesign& d, const NodewiseOptions& opt);

// One-step correction of each projected draw toward its dense counterpart:
// row i of the result is projected_i + theta * gram * (draw_i - projected_i).
Eigen::MatrixXd debias_draws(const GroupedDesign& d, const ThetaHat& theta,
                             const Eigen::MatrixXd& draws,
                             const Eigen::MatrixXd& projected);

// Debiased group lasso point estimate: gl + n^-1 theta X^T (y - X gl).
Eigen::VectorXd debiased_group_lasso(const GroupedDesign& d, const ThetaHat& theta,
                                     const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& gl_coef);

struct CredibleBand {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double level = 0.95;
};

// Per-coordinate equal-tailed band from the rows of `samples`, using the
// linearly interpolated empirical quantile (the convention with plotting
// position h = (D - 1) q + 1).
CredibleBand credible_intervals(const Eigen::MatrixXd& samples, double level);

// Gaussian limit check for the standardized corrected draws
// sqrt(n) (draw - center) / sigma against mean n^{-1/2} theta X^T mu / sigma,
// mu = X (ridge mean - center), and covariance n^-1 theta X^T H X theta^T
// with H the ridge hat matrix.
struct BvmDiagnostic {
  Eigen::VectorXd empirical_mean;
  Eigen::VectorXd theory_mean;
  Eigen::VectorXd empirical_var;
  Eigen::VectorXd theory_var;
  double max_mean_discrepancy_se = 0.0;  // |emp - theory| in per-coordinate MC SEs
  double max_var_ratio_error = 0.0;      // |emp/theory - 1|, coordinates with var > 0
};

BvmDiagnostic bvm_diagnostic(const GroupedDesign& d, const RidgePosterior& post,
                             const ThetaHat& theta, const Eigen::MatrixXd& debiased,
                             const Eigen::VectorXd& center);

// Median over draws of sqrt(n) * max_k || block k of (theta * gram - I)
// (projected_i - beta0) ||. Shrinks as the sample grows when the projection
// tracks the dense draws.
double debias_correction_stat(const GroupedDesign& d, const ThetaHat& theta,
                              const Eigen::MatrixXd& projected,
                              const Eigen::VectorXd& beta0);

}  // namespace sparseproj
