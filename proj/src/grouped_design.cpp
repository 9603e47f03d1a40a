#include "sparseproj/grouped_design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <Eigen/Dense>

namespace sparseproj {

int GroupSpec::n_cols() const {
  int p = 0;
  for (const auto& g : groups) p += static_cast<int>(g.size());
  return p;
}

void GroupSpec::validate(int p) const {
  std::vector<char> seen(p, 0);
  int covered = 0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].empty())
      throw std::invalid_argument("group " + std::to_string(k + 1) + " is empty");
    for (int j : groups[k]) {
      if (j < 0 || j >= p)
        throw std::invalid_argument("group " + std::to_string(k + 1) +
                                    " references column " + std::to_string(j + 1) +
                                    " outside 1.." + std::to_string(p));
      if (seen[j])
        throw std::invalid_argument("column " + std::to_string(j + 1) +
                                    " appears in more than one group");
      seen[j] = 1;
      ++covered;
    }
  }
  if (covered != p)
    throw std::invalid_argument("groups cover " + std::to_string(covered) +
                                " of " + std::to_string(p) + " columns");
}

GroupSpec GroupSpec::singletons(int p) {
  GroupSpec s;
  s.groups.resize(p);
  for (int j = 0; j < p; ++j) s.groups[j] = {j};
  return s;
}

GroupSpec GroupSpec::contiguous(const std::vector<int>& sizes) {
  GroupSpec s;
  int j = 0;
  for (int sz : sizes) {
    std::vector<int> g(sz);
    std::iota(g.begin(), g.end(), j);
    j += sz;
    s.groups.push_back(std::move(g));
  }
  return s;
}

Eigen::MatrixXd GroupedDesign::group_cols(int k) const {
  const auto& g = spec.groups[k];
  Eigen::MatrixXd out(X.rows(), g.size());
  for (std::size_t c = 0; c < g.size(); ++c) out.col(c) = X.col(g[c]);
  return out;
}

GroupedDesign GroupedDesign::subset_rows(const std::vector<int>& rows) const {
  GroupedDesign out;
  out.spec = spec;
  out.col_center = col_center;
  out.col_scale = col_scale;
  out.standardized = standardized;
  out.X.resize(rows.size(), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.X.row(i) = X.row(rows[i]);
  return out;
}

GroupedDesign make_design(Eigen::MatrixXd X, GroupSpec spec) {
  spec.validate(static_cast<int>(X.cols()));
  GroupedDesign d;
  d.X = std::move(X);
  d.spec = std::move(spec);
  d.col_center = Eigen::VectorXd::Zero(d.X.cols());
  d.col_scale = Eigen::VectorXd::Ones(d.X.cols());
  return d;
}

GroupedDesign standardize(const GroupedDesign& d) {
  const Eigen::Index n = d.n(), p = d.p();
  GroupedDesign out;
  out.spec = d.spec;
  out.standardized = true;
  out.X.resize(n, p);
  out.col_center.resize(p);
  out.col_scale.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double m = d.X.col(j).mean();
    Eigen::VectorXd c = d.X.col(j).array() - m;
    double s = std::sqrt(c.squaredNorm() / static_cast<double>(n));
    if (s == 0.0) s = 1.0;
    out.X.col(j) = c / s;
    // Compose with any transformation already recorded on the input.
    out.col_center[j] = d.col_center[j] + m * d.col_scale[j];
    out.col_scale[j] = d.col_scale[j] * s;
  }
  return out;
}

Eigen::MatrixXd gram(const GroupedDesign& d) {
  const double n = static_cast<double>(d.n());
  Eigen::MatrixXd g = (d.X.transpose() * d.X) / n;
  return 0.5 * (g + g.transpose());
}

std::vector<int> columns_of_groups(const GroupSpec& spec, const std::vector<int>& groups) {
  std::vector<int> cols;
  for (int k : groups) {
    if (k < 0 || k >= spec.n_groups())
      throw std::invalid_argument("group id " + std::to_string(k + 1) + " out of range");
    cols.insert(cols.end(), spec.groups[k].begin(), spec.groups[k].end());
  }
  return cols;
}

double restricted_eigenvalue(const GroupedDesign& d, const std::vector<int>& groups) {
  const std::vector<int> cols = columns_of_groups(d.spec, groups);
  if (cols.empty()) throw std::invalid_argument("restricted_eigenvalue: no groups given");
  Eigen::MatrixXd Xs(d.n(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) Xs.col(c) = d.X.col(cols[c]);
  Eigen::MatrixXd G = (Xs.transpose() * Xs) / static_cast<double>(d.n());
  G = 0.5 * (G + G.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

namespace {

// Largest singular value of B via power iteration on B^T B.
double operator_norm_power(const Eigen::MatrixXd& B, double tol, int max_iter) {
  const Eigen::Index m = B.cols();
  if (m == 0 || B.rows() == 0) return 0.0;
  Eigen::MatrixXd BtB = B.transpose() * B;
  // Deterministic start: ones plus a ramp, which is never orthogonal to the
  // leading eigenvector in exact arithmetic for generic inputs.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m);
  for (Eigen::Index i = 0; i < m; ++i) v[i] += 1e-3 * static_cast<double>(i);
  v.normalize();
  double prev = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = BtB * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(norm - prev) <= tol * std::max(1.0, norm)) {
      prev = norm;
      break;
    }
    prev = norm;
  }
  return std::sqrt(prev);
}

}  // namespace

double irrepresentability_statistic(const GroupedDesign& d,
                                    const std::vector<int>& signal_groups) {
  const std::vector<int> s_cols = columns_of_groups(d.spec, signal_groups);
  if (s_cols.empty())
    throw std::invalid_argument("irrepresentability_statistic: no signal groups");
  std::vector<char> is_signal(d.spec.n_groups(), 0);
  for (int k : signal_groups) is_signal[k] = 1;

  Eigen::MatrixXd Xs(d.n(), s_cols.size());
  for (std::size_t c = 0; c < s_cols.size(); ++c) Xs.col(c) = d.X.col(s_cols[c]);
  Eigen::MatrixXd Gss = Xs.transpose() * Xs;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(0.5 * (Gss + Gss.transpose()));
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("irrepresentability_statistic: singular signal gram");

  const int max_iter = 10 * static_cast<int>(d.p());
  double worst = 0.0;
  for (int k = 0; k < d.spec.n_groups(); ++k) {
    if (is_signal[k]) continue;
    Eigen::MatrixXd Xk = d.group_cols(k);
    // B = X_Gk^T X_S (X_S^T X_S)^{-1}, assembled via a solve on the right.
    Eigen::MatrixXd B = ldlt.solve(Xs.transpose() * Xk).transpose();
    worst = std::max(worst, operator_norm_power(B, 1e-10, max_iter));
  }
  return worst;
}

}  // namespace sparseproj
