#pragma once

#include <vector>
#include <Eigen/Core>

#include "sparseproj/grouped_design.hpp"

namespace sparseproj {

// Knot layout for one covariate: boundary knots at the observed range with
// multiplicity degree+1, interior knots at empirical quantiles. col_means
// holds the per-column centering applied when the basis entered a design.
struct SplineBasisSpec {
  int degree = 3;
  Eigen::VectorXd knots;
  Eigen::VectorXd col_means;  // empty until the basis is centered

  int n_basis() const { return static_cast<int>(knots.size()) - degree - 1; }
};

// Places n_basis - degree - 1 interior knots at the linearly interpolated
// empirical quantiles i / (m + 1) of x. Requires n_basis >= degree + 1 and a
// nondegenerate sample range.
SplineBasisSpec make_basis_spec(const Eigen::VectorXd& x, int n_basis, int degree = 3);

// Raw basis matrix, one row per query point, one column per basis function.
// Rows sum to one on the knot range; queries are clamped to that range.
Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& x, const SplineBasisSpec& spec);

struct AdditiveExpansion {
  GroupedDesign design;                 // centered basis columns, one group per covariate
  std::vector<SplineBasisSpec> bases;   // col_means filled per covariate
};

// Expands each column of xraw into its centered B-spline basis and stacks the
// blocks side by side, grouped per covariate. Column j of covariate k lands
// at design column k * n_basis + j.
AdditiveExpansion expand_additive_design(const Eigen::MatrixXd& xraw, int n_basis,
                                         int degree = 3);

// Component value (B(x) - col_means) . coef_k for one covariate. coef_k is on
// the centered-basis scale (original column scaling, not standardized).
Eigen::VectorXd evaluate_component(const SplineBasisSpec& basis, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& coef_k);

// n^-1 || fitted_sum - f0 ||^2.
double additive_recovery_error(const Eigen::VectorXd& fitted_sum, const Eigen::VectorXd& f0);

}  // namespace sparseproj
