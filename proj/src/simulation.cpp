#include "sparseproj/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sparseproj/rng.hpp"

namespace sparseproj {

namespace {

Eigen::VectorXd signal_coefficients(const LinearScenario& sc, const GroupSpec& spec,
                                    int p, std::uint64_t coef_seed) {
  Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(p);
  CounterRng rng(coef_seed, rng_stream::kCoef);
  for (int k = 0; k < sc.s0; ++k)
    for (int j : spec.groups[k]) {
      const double mag = sc.signal_lo + (sc.signal_hi - sc.signal_lo) * rng.next_uniform();
      const double sign = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
      beta0[j] = sign * mag;
    }
  return beta0;
}

// Sizes in {8..12} whose total is pinned to p, filled deterministically from
// the seed's size stream.
std::vector<int> jittered_sizes(const LinearScenario& sc, int p, std::uint64_t seed) {
  const int lo = 8, hi = 12;
  if (p < lo * sc.n_groups || p > hi * sc.n_groups)
    throw std::invalid_argument("generate_linear: jittered sizes cannot reach p");
  CounterRng rng(seed, rng_stream::kSizes);
  std::vector<int> sizes(sc.n_groups);
  int total = 0;
  for (int& s : sizes) {
    s = lo + static_cast<int>(rng.next_uniform() * (hi - lo + 1));
    s = std::min(s, hi);
    total += s;
  }
  for (int k = 0; total != p; k = (k + 1) % sc.n_groups) {
    if (total < p && sizes[k] < hi) {
      ++sizes[k];
      ++total;
    } else if (total > p && sizes[k] > lo) {
      --sizes[k];
      --total;
    }
  }
  return sizes;
}

LinearData generate_linear_impl(const LinearScenario& sc, std::uint64_t seed,
                                std::uint64_t coef_seed) {
  if (sc.n <= 0 || sc.n_groups <= 0 || sc.group_size <= 0)
    throw std::invalid_argument("generate_linear: dimensions must be positive");
  if (sc.s0 < 0 || sc.s0 > sc.n_groups)
    throw std::invalid_argument("generate_linear: s0 out of range");
  if (!(sc.signal_hi >= sc.signal_lo && sc.signal_lo >= 0.0))
    throw std::invalid_argument("generate_linear: bad signal range");
  if (!(sc.ar1_rho >= 0.0 && sc.ar1_rho < 1.0))
    throw std::invalid_argument("generate_linear: ar1_rho must be in [0, 1)");

  const int p = sc.n_groups * sc.group_size;
  LinearData data;
  data.x.resize(sc.n, p);
  CounterRng design_rng(seed, rng_stream::kDesign);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < sc.n; ++i) data.x(i, j) = design_rng.next_gaussian();
  if (sc.ar1_rho > 0.0) {
    // Stationary AR(1) across columns keeps every marginal standard normal.
    const double carry = std::sqrt(1.0 - sc.ar1_rho * sc.ar1_rho);
    for (int j = 1; j < p; ++j)
      data.x.col(j) = sc.ar1_rho * data.x.col(j - 1) + carry * data.x.col(j);
  }

  if (sc.jitter_sizes)
    data.spec = GroupSpec::contiguous(jittered_sizes(sc, p, seed));
  else
    data.spec = GroupSpec::contiguous(std::vector<int>(sc.n_groups, sc.group_size));
  data.beta0 = signal_coefficients(sc, data.spec, p, coef_seed);
  for (int k = 0; k < sc.s0; ++k) data.signal_groups.push_back(k);

  CounterRng noise_rng(seed, rng_stream::kNoise);
  data.y = data.x * data.beta0 + sc.sigma * noise_rng.gaussian_vector(sc.n);
  return data;
}

}  // namespace

LinearData generate_linear(const LinearScenario& sc, std::uint64_t seed) {
  return generate_linear_impl(sc, seed, seed);
}

LinearData generate_linear_fixed_beta(const LinearScenario& sc, std::uint64_t seed,
                                      std::uint64_t coef_seed) {
  return generate_linear_impl(sc, seed, coef_seed);
}

double additive_component(int k, double x) {
  switch (k) {
    case 0: return 3.0 * std::sin(x);
    case 1: return 2.0 * x * x;
    case 2: return -1.5 * x;
    case 3: return std::exp(x);
    case 4: return std::log(std::abs(x) + 1.0);
    default: return 0.0;
  }
}

AdditiveData generate_additive(const AdditiveScenario& sc, std::uint64_t seed) {
  if (sc.n <= 0 || sc.n_vars < 5)
    throw std::invalid_argument("generate_additive: need n > 0 and at least 5 covariates");
  if (!(sc.x_hi > sc.x_lo)) throw std::invalid_argument("generate_additive: bad range");

  AdditiveData data;
  data.x.resize(sc.n, sc.n_vars);
  CounterRng design_rng(seed, rng_stream::kDesign);
  for (int j = 0; j < sc.n_vars; ++j)
    for (int i = 0; i < sc.n; ++i)
      data.x(i, j) = sc.x_lo + (sc.x_hi - sc.x_lo) * design_rng.next_uniform();

  data.f_true = Eigen::VectorXd::Zero(sc.n);
  for (int k = 0; k < 5; ++k) {
    for (int i = 0; i < sc.n; ++i) data.f_true[i] += additive_component(k, data.x(i, k));
    data.signal_vars.push_back(k);
  }

  CounterRng noise_rng(seed, rng_stream::kNoise);
  data.y = data.f_true + sc.sigma * noise_rng.gaussian_vector(sc.n);
  return data;
}

MpmSelection mpm_select(const Eigen::MatrixXd& projected, const GroupSpec& spec,
                        double threshold) {
  if (projected.cols() != spec.n_cols())
    throw std::invalid_argument("mpm_select: width mismatch with the group spec");
  const Eigen::Index n_draws = projected.rows();
  MpmSelection sel;
  sel.frequency = Eigen::VectorXd::Zero(spec.n_groups());
  if (n_draws == 0) return sel;
  for (int k = 0; k < spec.n_groups(); ++k) {
    int active = 0;
    for (Eigen::Index i = 0; i < n_draws; ++i) {
      bool nonzero = false;
      for (int j : spec.groups[k])
        if (projected(i, j) != 0.0) {
          nonzero = true;
          break;
        }
      if (nonzero) ++active;
    }
    sel.frequency[k] = static_cast<double>(active) / static_cast<double>(n_draws);
    if (sel.frequency[k] > threshold) sel.groups.push_back(k);
  }
  return sel;
}

SelectionMetrics selection_metrics(const std::vector<int>& selected,
                                   const std::vector<int>& truth, int n_groups) {
  std::vector<char> in_truth(n_groups, 0);
  for (int k : truth) in_truth[k] = 1;
  SelectionMetrics m;
  m.selected = static_cast<int>(selected.size());
  for (int k : selected)
    if (in_truth[k]) ++m.true_positives;
  const int s0 = static_cast<int>(truth.size());
  m.false_positives = m.selected - m.true_positives;
  m.false_negatives = s0 - m.true_positives;
  // Degenerate conventions: an empty selection scores precision 0, and any
  // run with no true positives scores F1 0.
  m.precision = m.selected > 0 ? static_cast<double>(m.true_positives) / m.selected : 0.0;
  m.recall = s0 > 0 ? static_cast<double>(m.true_positives) / s0 : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

Eigen::VectorXd mpm_point_estimate(const Eigen::MatrixXd& projected, const GroupSpec& spec,
                                   const MpmSelection& sel) {
  if (projected.cols() != spec.n_cols())
    throw std::invalid_argument("mpm_point_estimate: width mismatch with the group spec");
  Eigen::VectorXd est = Eigen::VectorXd::Zero(projected.cols());
  if (projected.rows() == 0) return est;
  for (int k : sel.groups)
    for (int j : spec.groups[k]) est[j] = projected.col(j).mean();
  return est;
}

double coefficient_mse(const Eigen::VectorXd& est, const Eigen::VectorXd& beta0) {
  if (est.size() != beta0.size())
    throw std::invalid_argument("coefficient_mse: length mismatch");
  return (est - beta0).squaredNorm();
}

CoverageMetrics coverage_metrics(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const Eigen::VectorXd& beta0,
                                 const std::vector<char>& is_signal) {
  const Eigen::Index p = beta0.size();
  if (lower.size() != p || upper.size() != p ||
      static_cast<Eigen::Index>(is_signal.size()) != p)
    throw std::invalid_argument("coverage_metrics: length mismatch");
  CoverageMetrics out;
  int n_sig = 0, n_noise = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const bool covered = lower[j] <= beta0[j] && beta0[j] <= upper[j];
    const double width = upper[j] - lower[j];
    if (is_signal[j]) {
      ++n_sig;
      out.signal_coverage += covered;
      out.signal_width += width;
    } else {
      ++n_noise;
      out.noise_coverage += covered;
      out.noise_width += width;
    }
  }
  if (n_sig > 0) {
    out.signal_coverage /= n_sig;
    out.signal_width /= n_sig;
  }
  if (n_noise > 0) {
    out.noise_coverage /= n_noise;
    out.noise_width /= n_noise;
  }
  return out;
}

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  const std::size_t n = xs.size();
  if (n == 0) return out;
  double sum = 0.0;
  for (double v : xs) sum += v;
  out.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : xs) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / (static_cast<double>(n - 1) * static_cast<double>(n)));
  }
  return out;
}

}  // namespace sparseproj
