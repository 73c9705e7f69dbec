#include "emus/error_analysis.hpp"

#include <algorithm>
#include <cmath>

namespace emus {

Eigen::MatrixXd group_inverse(const OverlapMatrix& overlap) {
  const auto& F = overlap.F;
  const int L = static_cast<int>(F.rows());
  WeightVector w = stationary_vector(overlap);
  Eigen::MatrixXd W = Eigen::VectorXd::Ones(L) * w.z.transpose();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(L, L) - F;
  return (A + W).partialPivLu().solve(Eigen::MatrixXd::Identity(L, L)) - W;
}

AutocovResult integrated_autocov(std::span<const double> series, double window_factor) {
  const std::size_t n = series.size();
  if (n < 2) throw std::invalid_argument("integrated_autocov: series too short");
  AutocovResult r;
  auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  if (*lo_it == *hi_it) return r;  // constant series

  std::vector<double> c(n);
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= n;
  for (std::size_t t = 0; t < n; ++t) c[t] = series[t] - mean;

  double var = 0.0;
  for (std::size_t t = 0; t < n; ++t) var += c[t] * c[t];
  var /= n;
  if (var == 0.0) return r;

  const int wmax = static_cast<int>(n / 2);
  double total = var;
  int W = 0;
  while (true) {
    ++W;
    if (W > wmax) {
      r.reliable = false;
      W = wmax;
      break;
    }
    double cw = 0.0;
    for (std::size_t t = 0; t + W < n; ++t) cw += c[t] * c[t + W];
    cw /= (n - W);
    total += 2.0 * cw;
    double tau = total / var;
    if (W >= window_factor * tau) break;
  }
  r.value = total;
  r.window = W;
  return r;
}

double integrated_cross_cov(std::span<const double> a, std::span<const double> b, int window) {
  const std::size_t n = a.size();
  if (b.size() != n) throw std::invalid_argument("integrated_cross_cov: length mismatch");
  if (n < 2) throw std::invalid_argument("integrated_cross_cov: series too short");
  double ma = 0.0, mb = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    ma += a[t];
    mb += b[t];
  }
  ma /= n;
  mb /= n;
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) total += (a[t] - ma) * (b[t] - mb);
  total /= n;
  for (int W = 1; W <= window && W < static_cast<int>(n); ++W) {
    double fwd = 0.0, bwd = 0.0;
    for (std::size_t t = 0; t + W < n; ++t) {
      fwd += (a[t] - ma) * (b[t + W] - mb);
      bwd += (b[t] - mb) * (a[t + W] - ma);
    }
    total += (fwd + bwd) / (n - W);
  }
  return total;
}

StratumCovariance estimate_stratum_covariance(const StratumStats& stats, double kappa) {
  if (stats.psi_star_series.size() == 0)
    throw std::invalid_argument("estimate_stratum_covariance: retained series required");
  StratumCovariance sc;
  sc.stratum = stats.stratum;
  sc.kappa = kappa;
  sc.observed = stats.observed;
  const int m = static_cast<int>(stats.observed.size());
  const std::size_t n = stats.count;

  // shared self-consistent window: the largest over the column and
  // observable autocovariances
  int W = 0;
  for (int c = 0; c < m; ++c) {
    Eigen::VectorXd col = stats.psi_star_series.col(c);
    auto ac = integrated_autocov({col.data(), n});
    W = std::max(W, ac.window);
    sc.reliable = sc.reliable && ac.reliable;
  }
  {
    auto ac = integrated_autocov({stats.g_star_series.data(), n});
    W = std::max(W, ac.window);
    sc.reliable = sc.reliable && ac.reliable;
  }
  sc.window = W;

  sc.sigma.resize(m, m);
  sc.rho.resize(m);
  for (int a = 0; a < m; ++a) {
    Eigen::VectorXd ca = stats.psi_star_series.col(a);
    for (int b = a; b < m; ++b) {
      Eigen::VectorXd cb = stats.psi_star_series.col(b);
      double v = integrated_cross_cov({ca.data(), n}, {cb.data(), n}, W);
      sc.sigma(a, b) = v;
      sc.sigma(b, a) = v;
    }
    sc.rho[a] = integrated_cross_cov({ca.data(), n}, {stats.g_star_series.data(), n}, W);
  }
  sc.tau = integrated_cross_cov({stats.g_star_series.data(), n},
                                {stats.g_star_series.data(), n}, W);

  // project onto the PSD cone (windowed estimates need not be PSD)
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sc.sigma);
  Eigen::VectorXd ev = es.eigenvalues();
  bool any_negative = false;
  for (int k = 0; k < m; ++k)
    if (ev[k] < 0.0) {
      ev[k] = 0.0;
      any_negative = true;
    }
  if (any_negative)
    sc.sigma = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  if (sc.tau < 0.0) sc.tau = 0.0;
  return sc;
}

VarianceReport sigma2_us(const OverlapMatrix& overlap, const WeightVector& w,
                         const std::vector<StratumCovariance>& covs,
                         const Eigen::VectorXd& stratum_means, bool with_bounds,
                         double pi_abs_g) {
  const int L = static_cast<int>(overlap.F.rows());
  if (static_cast<int>(covs.size()) != L)
    throw std::invalid_argument("sigma2_us: covariance count mismatch");
  if (stratum_means.size() != L) throw std::invalid_argument("sigma2_us: means size mismatch");

  Eigen::MatrixXd a_sharp = group_inverse(overlap);
  Eigen::VectorXd v = a_sharp * stratum_means;

  VarianceReport rep;
  rep.per_stratum.resize(L);
  double total = 0.0;
  for (int i = 0; i < L; ++i) {
    const auto& sc = covs[i];
    if (!(sc.kappa > 0.0)) throw std::invalid_argument("sigma2_us: kappa must be positive");
    const int m = static_cast<int>(sc.observed.size());
    Eigen::VectorXd vo(m);
    for (int c = 0; c < m; ++c) vo[c] = v[sc.observed[c]];
    double term = vo.dot(sc.sigma * vo) + 2.0 * vo.dot(sc.rho) + sc.tau;
    double zi = w.z[i];
    rep.per_stratum[i] = zi * zi / sc.kappa * term;
    total += rep.per_stratum[i];
  }
  if (total < 0.0) {
    rep.clipped = true;
    total = std::max(total, 0.0);
  }
  rep.sigma2 = total;

  if (with_bounds) {
    rep.hitting = hitting_probabilities(overlap);
    rep.bound_hitting =
        variance_upper_bound(overlap, w, covs, pi_abs_g, BoundKind::Hitting, &rep.hitting);
    rep.bound_overlap = variance_upper_bound(overlap, w, covs, pi_abs_g, BoundKind::Overlap);
  }
  return rep;
}

Eigen::MatrixXd hitting_probabilities(const OverlapMatrix& overlap) {
  const auto& F = overlap.F;
  const int L = static_cast<int>(F.rows());
  {
    auto rep = check_irreducibility_matrix([&](int a, int b) { return F(a, b) > 0.0; }, L);
    if (!rep.irreducible)
      throw ReducibleMatrixError("hitting_probabilities: matrix is reducible", rep.witness);
  }
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      if (i == j) continue;
      // absorbing boundary h(j) = 1, h(i) = 0; solve over the rest
      std::vector<int> rest;
      rest.reserve(L - 2);
      for (int k = 0; k < L; ++k)
        if (k != i && k != j) rest.push_back(k);
      const int R = static_cast<int>(rest.size());
      Eigen::VectorXd h;
      if (R > 0) {
        Eigen::MatrixXd A(R, R);
        Eigen::VectorXd b(R);
        for (int r = 0; r < R; ++r) {
          for (int c = 0; c < R; ++c)
            A(r, c) = (r == c ? 1.0 : 0.0) - F(rest[r], rest[c]);
          b[r] = F(rest[r], j);
        }
        h = A.partialPivLu().solve(b);
      }
      double p = F(i, j);
      for (int r = 0; r < R; ++r) p += F(i, rest[r]) * h[r];
      P(i, j) = p;
    }
  return P;
}

double variance_upper_bound(const OverlapMatrix& overlap, const WeightVector& w,
                            const std::vector<StratumCovariance>& covs, double pi_abs_g,
                            BoundKind kind, const Eigen::MatrixXd* hitting) {
  const auto& F = overlap.F;
  const int L = static_cast<int>(F.rows());
  Eigen::MatrixXd hit;
  if (kind == BoundKind::Hitting) {
    if (hitting)
      hit = *hitting;
    else
      hit = hitting_probabilities(overlap);
  }
  double total = 0.0;
  for (int i = 0; i < L; ++i) {
    const auto& sc = covs[i];
    double inv_sq_sum = 0.0;
    for (int j = 0; j < L; ++j) {
      if (j == i || !(F(i, j) > 0.0)) continue;
      double p = kind == BoundKind::Hitting ? hit(i, j) : F(i, j);
      inv_sq_sum += 1.0 / (p * p);
    }
    double zi = w.z[i];
    total += (sc.tau * zi * zi + pi_abs_g * pi_abs_g * sc.sigma.trace() * inv_sq_sum) / sc.kappa;
  }
  return 2.0 * total;
}

double LogWeightDerivatives::max_abs_over_k(int i, int j) const {
  double best = 0.0;
  for (int k = 0; k < size(); ++k) best = std::max(best, std::fabs((*this)(k, i, j)));
  return best;
}

LogWeightDerivatives log_weight_derivatives(const OverlapMatrix& overlap) {
  WeightVector w = stationary_vector(overlap);
  for (int k = 0; k < w.z.size(); ++k)
    if (!(w.z[k] > 0.0))
      throw std::runtime_error("log_weight_derivatives: vanishing weight entry");
  return LogWeightDerivatives(group_inverse(overlap), w.z);
}

}  // namespace emus
