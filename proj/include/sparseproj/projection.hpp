#pragma once

#include <cstdint>
#include <vector>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "sparseproj/grouped_design.hpp"

namespace sparseproj {

enum class PenaltyKind { kGroupLasso, kGroupScad, kAdaptiveGroupLasso };

// Grouped penalty sum_k P(||u_k||) added to the squared-error loss
// n^-1 ||target - X u||^2.
//
// Per-group thresholds:
//   group lasso            lambda * s_k * ||u_k||
//   adaptive group lasso   lambda * s_k * w_k * ||u_k||
//   group SCAD             scad(||u_k||; lambda * s_k, tau)
// where s_k = sqrt(group size) when size_scaled is set, else 1. Adaptive
// weights may be +inf, which pins the group at zero.
struct PenaltyConfig {
  PenaltyKind kind = PenaltyKind::kGroupLasso;
  double lambda = 0.0;
  double tau = 3.7;  // SCAD shape, must exceed 2
  bool size_scaled = true;
  Eigen::VectorXd weights;  // adaptive only, one entry per group

  void validate(int n_groups) const;
};

struct SolveControl {
  double tol = 1e-7;      // on both max relative block change and KKT residual
  int max_iter = 10000;   // full cycles over the groups
};

struct SolveResult {
  Eigen::VectorXd coef;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// SCAD penalty with knots at lambda and tau * lambda: linear with slope
// lambda on [0, lambda], a concave quadratic on (lambda, tau*lambda],
// constant lambda^2 (tau + 1) / 2 beyond.
double scad_penalty(double t, double lambda, double tau);
// Right derivative: lambda on [0, lambda), (tau*lambda - t)_+ / (tau - 1) above.
double scad_derivative(double t, double lambda, double tau);
// argmin over theta >= 0 of (theta - z)^2 + scad(theta; lambda, tau), z >= 0.
double scad_threshold(double z, double lambda, double tau);

// v scaled toward zero: (1 - t/||v||)_+ v.
Eigen::VectorXd group_soft_threshold(const Eigen::VectorXd& v, double t);

// Cyclic block coordinate descent solver for
//   min_u n^-1 ||target - X u||^2 + sum_k P(||u_k||).
// Each block update is the exact minimizer of the block subproblem, computed
// from a cached eigendecomposition of the block gram via a 1-d root-find on
// the regularized system (scalar tolerance 1e-10). Construction cost is one
// p_k x p_k eigendecomposition per group; solves can then be issued for many
// targets against the same design, including concurrently.
class ProjectionSolver {
 public:
  explicit ProjectionSolver(const GroupedDesign& d);

  // init == nullptr starts from zero. Converged when the largest relative
  // block change in a full cycle drops below ctl.tol and the KKT residual is
  // below ctl.tol as well.
  SolveResult solve(const Eigen::VectorXd& target, const PenaltyConfig& pen,
                    const SolveControl& ctl = {},
                    const Eigen::VectorXd* init = nullptr) const;

  const GroupedDesign& design() const { return *d_; }

 private:
  struct Block {
    std::vector<int> cols;
    double sqrt_size = 1.0;
    Eigen::MatrixXd x;        // the block's columns, gathered once
    Eigen::MatrixXd q;        // eigenvectors of (2/n) Xk^T Xk
    Eigen::VectorXd eigvals;  // matching eigenvalues, clamped at 0
  };

  Eigen::VectorXd block_minimize(const Block& blk, const Eigen::VectorXd& b,
                                 const PenaltyConfig& pen, int k) const;

  const GroupedDesign* d_;
  std::vector<Block> blocks_;
};

SolveResult solve_penalized_ls(const GroupedDesign& d, const Eigen::VectorXd& target,
                               const PenaltyConfig& pen, const SolveControl& ctl = {},
                               const Eigen::VectorXd* init = nullptr);

// n^-1 ||target - X u||^2 + sum_k P(||u_k||); +inf if a pinned group is active.
double penalized_objective(const GroupedDesign& d, const Eigen::VectorXd& target,
                           const PenaltyConfig& pen, const Eigen::VectorXd& u);

// Stationarity certificate, maximized over groups. With v_k = (2/n) Xk^T
// (target - X u): active groups contribute || v_k - P'(||u_k||) u_k / ||u_k||
// ||, inactive groups (||v_k|| - P'(0+))_+. Zero at an exact stationary point.
double kkt_residual(const GroupedDesign& d, const Eigen::VectorXd& target,
                    const PenaltyConfig& pen, const Eigen::VectorXd& u);

// Smallest lambda at which the all-zero vector is stationary:
// max_k 2 ||n^-1 Xk^T y|| / (s_k w_k). Pinned groups are skipped.
double lambda_max(const GroupedDesign& d, const Eigen::VectorXd& y,
                  const PenaltyConfig& pen);

// Group lasso fit of y on X at a fixed lambda, started from zero.
SolveResult fit_group_lasso(const GroupedDesign& d, const Eigen::VectorXd& y,
                            double lambda, const SolveControl& ctl = {},
                            bool size_scaled = true);

// w_k = 1 / ||pilot_k||; +inf when the pilot block is exactly zero.
Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& pilot, const GroupSpec& spec);

struct CvResult {
  double lambda = 0.0;           // selected value
  int best_index = 0;            // into grid
  Eigen::VectorXd grid;          // descending
  Eigen::VectorXd cv_error;      // mean held-out squared prediction error
};

// K-fold cross validation of lambda for the penalized fit of y on X. The grid
// has grid_size log-spaced points descending from lambda_max(d, y, pen) to
// min_ratio times it; fold membership comes from a seeded shuffle (near-equal
// fold sizes); ties in the error resolve to the largest lambda. The same grid
// and folds are used for every penalty kind; adaptive weights in `pen` are
// held fixed across folds.
CvResult cross_validate_lambda(const GroupedDesign& d, const Eigen::VectorXd& y,
                               const PenaltyConfig& pen, int folds, int grid_size,
                               double min_ratio, std::uint64_t seed,
                               const SolveControl& ctl = {});

// Applies the penalized projection to each posterior draw (rows of `draws`):
// row i is argmin_u n^-1 ||X beta_i - X u||^2 + sum_k P(||u_k||), solved with
// the draw itself as the starting point. Rows are independent; `jobs` > 1
// splits them across threads without changing any result.
Eigen::MatrixXd project_draws(const GroupedDesign& d, const Eigen::MatrixXd& draws,
                              const PenaltyConfig& pen, const SolveControl& ctl = {},
                              int jobs = 1, std::vector<SolveResult>* reports = nullptr);

}  // namespace sparseproj
