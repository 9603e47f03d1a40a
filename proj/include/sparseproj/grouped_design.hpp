#pragma once

#include <stdexcept>
#include <vector>
#include <Eigen/Core>

namespace sparseproj {

// Disjoint partition of the columns 0..p-1 into groups.
struct GroupSpec {
  std::vector<std::vector<int>> groups;

  int n_groups() const { return static_cast<int>(groups.size()); }
  int n_cols() const;
  int group_size(int k) const { return static_cast<int>(groups[k].size()); }

  // Throws std::invalid_argument unless the groups are nonempty, disjoint,
  // and cover exactly the columns 0..p-1.
  void validate(int p) const;

  // All columns are their own group.
  static GroupSpec singletons(int p);
  // Consecutive runs of the given sizes.
  static GroupSpec contiguous(const std::vector<int>& sizes);
};

// Design matrix with its group structure and the centering/scaling that was
// applied to it. For an unstandardized design center is 0 and scale is 1.
struct GroupedDesign {
  Eigen::MatrixXd X;
  GroupSpec spec;
  Eigen::VectorXd col_center;
  Eigen::VectorXd col_scale;
  bool standardized = false;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  int n_groups() const { return spec.n_groups(); }
  const std::vector<int>& group(int k) const { return spec.groups[k]; }
  Eigen::MatrixXd group_cols(int k) const;
  // Rows of the design restricted to `rows`, keeping the group structure.
  GroupedDesign subset_rows(const std::vector<int>& rows) const;
};

// Validates the pair and wraps it; no transformation applied.
GroupedDesign make_design(Eigen::MatrixXd X, GroupSpec spec);

// Centers each column and rescales so that n^-1 * sum_i x_ij^2 = 1 for the
// centered column. Columns with zero variance get scale 1 and become all
// zeros. Idempotent up to floating point roundoff.
GroupedDesign standardize(const GroupedDesign& d);

// n^-1 X^T X.
Eigen::MatrixXd gram(const GroupedDesign& d);

// Smallest eigenvalue of n^-1 X_S^T X_S where S is the union of the listed
// groups (0-based group ids). The submatrix is symmetrized before the solve.
double restricted_eigenvalue(const GroupedDesign& d, const std::vector<int>& groups);

// max over groups k outside `signal_groups` of the operator norm of
// X_Gk^T X_S (X_S^T X_S)^{-1}, computed by power iteration (tolerance 1e-10,
// at most 10*p iterations). Values below 1 indicate the irrepresentability
// condition holds for the given signal set.
double irrepresentability_statistic(const GroupedDesign& d,
                                    const std::vector<int>& signal_groups);

// Union of the listed groups' columns, in group order.
std::vector<int> columns_of_groups(const GroupSpec& spec, const std::vector<int>& groups);

}  // namespace sparseproj
