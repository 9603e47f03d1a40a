#pragma once

#include <cstdint>
#include <vector>
#include <Eigen/Core>

#include "sparseproj/grouped_design.hpp"

namespace sparseproj {

// Grouped linear model: gaussian design, the first s0 groups carry signal,
// nonzero coefficients are uniform on +-[signal_lo, signal_hi].
struct LinearScenario {
  int n = 100;
  int n_groups = 50;
  int group_size = 10;
  int s0 = 10;
  double signal_lo = 0.5;
  double signal_hi = 2.0;
  double sigma = 1.0;
  // Jittered layout: group sizes drawn from {8..12}, total held at
  // n_groups * group_size.
  bool jitter_sizes = false;
  // AR(1) column correlation rho^|j-k|; 0 keeps the columns independent.
  double ar1_rho = 0.0;
};

struct LinearData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd beta0;
  GroupSpec spec;
  std::vector<int> signal_groups;
};

LinearData generate_linear(const LinearScenario& sc, std::uint64_t seed);

// Same data with the coefficient stream pinned to coef_seed, so the truth is
// shared across replicates while design and noise vary.
LinearData generate_linear_fixed_beta(const LinearScenario& sc, std::uint64_t seed,
                                      std::uint64_t coef_seed);

// Sparse additive model on uniform covariates: five signal components
//   3 sin(x1), 2 x2^2, -1.5 x3, exp(x4), log(|x5| + 1)
// plus n_vars - 5 inert covariates.
struct AdditiveScenario {
  int n = 100;
  int n_vars = 50;
  double x_lo = -2.0;
  double x_hi = 2.0;
  double sigma = 1.0;
};

struct AdditiveData {
  Eigen::MatrixXd x;       // n x n_vars covariates
  Eigen::VectorXd y;
  Eigen::VectorXd f_true;  // sum of the signal components at the sample points
  std::vector<int> signal_vars;  // 0..4
};

AdditiveData generate_additive(const AdditiveScenario& sc, std::uint64_t seed);

// The five component functions, indexed 0..4.
double additive_component(int k, double x);

// Groups whose selection frequency across the rows (fraction of rows where
// the group's block is nonzero) strictly exceeds the threshold.
struct MpmSelection {
  std::vector<int> groups;
  Eigen::VectorXd frequency;  // one entry per group
};

MpmSelection mpm_select(const Eigen::MatrixXd& projected, const GroupSpec& spec,
                        double threshold = 0.5);

// Column means of the draws over selected groups, zero elsewhere.
Eigen::VectorXd mpm_point_estimate(const Eigen::MatrixXd& projected, const GroupSpec& spec,
                                   const MpmSelection& sel);

struct SelectionMetrics {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  int selected = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Empty selection with a nonempty truth scores 0; empty-empty scores 1.
SelectionMetrics selection_metrics(const std::vector<int>& selected,
                                   const std::vector<int>& truth, int n_groups);

// Squared coefficient error ||est - beta0||^2.
double coefficient_mse(const Eigen::VectorXd& est, const Eigen::VectorXd& beta0);

struct CoverageMetrics {
  double signal_coverage = 0.0;
  double noise_coverage = 0.0;
  double signal_width = 0.0;
  double noise_width = 0.0;
};

// Per-coordinate interval coverage of beta0, split by the signal mask.
CoverageMetrics coverage_metrics(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const Eigen::VectorXd& beta0,
                                 const std::vector<char>& is_signal);

// Mean and standard error of a sample.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_se(const std::vector<double>& xs);

}  // namespace sparseproj
