#include "sparseproj/additive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace sparseproj {

namespace {

// Linearly interpolated empirical quantile of a sorted sample,
// plotting position h = (n - 1) q.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = q * static_cast<double>(n - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(std::floor(h)), n - 2);
  const double frac = h - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

}  // namespace

SplineBasisSpec make_basis_spec(const Eigen::VectorXd& x, int n_basis, int degree) {
  if (degree < 0) throw std::invalid_argument("make_basis_spec: negative degree");
  if (n_basis < degree + 1)
    throw std::invalid_argument("make_basis_spec: need at least degree+1 basis functions");
  if (x.size() < 2) throw std::invalid_argument("make_basis_spec: need at least 2 points");

  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front(), hi = sorted.back();
  if (!(hi > lo)) throw std::invalid_argument("make_basis_spec: degenerate sample range");

  const int interior = n_basis - degree - 1;
  SplineBasisSpec spec;
  spec.degree = degree;
  spec.knots.resize(n_basis + degree + 1);
  int pos = 0;
  for (int i = 0; i <= degree; ++i) spec.knots[pos++] = lo;
  for (int i = 1; i <= interior; ++i) {
    const double q = static_cast<double>(i) / static_cast<double>(interior + 1);
    const double t = sorted_quantile(sorted, q);
    if (!(t > spec.knots[pos - 1]) || !(t < hi))
      throw std::invalid_argument("make_basis_spec: tied quantile knots");
    spec.knots[pos++] = t;
  }
  for (int i = 0; i <= degree; ++i) spec.knots[pos++] = hi;
  return spec;
}

Eigen::MatrixXd bspline_basis(const Eigen::VectorXd& x, const SplineBasisSpec& spec) {
  const int nb = spec.n_basis();
  const int d = spec.degree;
  if (nb <= 0) throw std::invalid_argument("bspline_basis: empty spec");
  const double lo = spec.knots[0], hi = spec.knots[spec.knots.size() - 1];

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.size(), nb);
  std::vector<double> vals(d + 1), left(d + 1), right(d + 1);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double t = std::min(std::max(x[i], lo), hi);
    // Knot span: largest j in [d, nb-1] with knots[j] <= t (< knots[j+1]).
    int span = d;
    while (span < nb - 1 && t >= spec.knots[span + 1]) ++span;
    // Triangular recurrence for the d+1 basis functions alive on the span.
    vals[0] = 1.0;
    for (int j = 1; j <= d; ++j) {
      left[j] = t - spec.knots[span + 1 - j];
      right[j] = spec.knots[span + j] - t;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double tmp = vals[r] / (right[r + 1] + left[j - r]);
        vals[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      vals[j] = saved;
    }
    for (int r = 0; r <= d; ++r) out(i, span - d + r) = vals[r];
  }
  return out;
}

AdditiveExpansion expand_additive_design(const Eigen::MatrixXd& xraw, int n_basis,
                                         int degree) {
  const Eigen::Index n = xraw.rows(), nvars = xraw.cols();
  if (n == 0 || nvars == 0)
    throw std::invalid_argument("expand_additive_design: empty input");

  AdditiveExpansion out;
  out.bases.reserve(nvars);
  Eigen::MatrixXd big(n, nvars * n_basis);
  for (Eigen::Index k = 0; k < nvars; ++k) {
    SplineBasisSpec spec = make_basis_spec(xraw.col(k), n_basis, degree);
    Eigen::MatrixXd b = bspline_basis(xraw.col(k), spec);
    spec.col_means = b.colwise().mean();
    big.middleCols(k * n_basis, n_basis) = b.rowwise() - spec.col_means.transpose();
    out.bases.push_back(std::move(spec));
  }
  out.design = make_design(std::move(big),
                           GroupSpec::contiguous(std::vector<int>(nvars, n_basis)));
  return out;
}

Eigen::VectorXd evaluate_component(const SplineBasisSpec& basis, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& coef_k) {
  if (coef_k.size() != basis.n_basis())
    throw std::invalid_argument("evaluate_component: coefficient size mismatch");
  Eigen::MatrixXd b = bspline_basis(x, basis);
  if (basis.col_means.size() == b.cols())
    b.rowwise() -= basis.col_means.transpose();
  return b * coef_k;
}

double additive_recovery_error(const Eigen::VectorXd& fitted_sum, const Eigen::VectorXd& f0) {
  if (fitted_sum.size() != f0.size())
    throw std::invalid_argument("additive_recovery_error: length mismatch");
  return (fitted_sum - f0).squaredNorm() / static_cast<double>(f0.size());
}

}  // namespace sparseproj
