#include "emus/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emus/numerics.hpp"

namespace emus {

namespace {

std::string format_state(std::span<const double> x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (k) os << ", ";
    os << x[k];
  }
  os << ')';
  return os.str();
}

}  // namespace

StratumStats accumulate(const Trajectory& traj, const BiasSet& bias, const Observable& g,
                        const CollectiveVariable* cv, bool keep_series) {
  if (traj.size() == 0) throw std::invalid_argument("accumulate: empty trajectory");
  const int L = bias.size();
  const std::size_t n = traj.size();

  StratumStats s;
  s.stratum = traj.stratum;
  s.count = n;
  s.overlap_row = Eigen::VectorXd::Zero(L);

  // pass 1: means and the set of observed overlap columns
  std::vector<KahanSum> row(L);
  KahanSum g_sum, one_sum;
  std::vector<bool> seen(L, false);
  SparsePsi nz;
  for (std::size_t t = 0; t < n; ++t) {
    auto x = traj.state(t);
    bias.evaluate_nonzero(x, nz);
    double total = 0.0;
    for (auto& [j, v] : nz) total += v;
    if (!(total > 0.0))
      throw std::runtime_error("accumulate: sum of bias functions vanishes at state " +
                               format_state(x));
    for (auto& [j, v] : nz) {
      row[j].add(v / total);
      seen[j] = true;
    }
    g_sum.add(g(x) / total);
    one_sum.add(1.0 / total);
  }
  for (int j = 0; j < L; ++j) s.overlap_row[j] = row[j].value() / n;
  s.mean_g_star = g_sum.value() / n;
  s.mean_one_star = one_sum.value() / n;
  for (int j = 0; j < L; ++j)
    if (seen[j]) s.observed.push_back(j);

  if (!keep_series) return s;

  // pass 2: retained series for autocovariance and re-binning
  const int m = static_cast<int>(s.observed.size());
  std::vector<int> col(L, -1);
  for (int c = 0; c < m; ++c) col[s.observed[c]] = c;
  s.psi_star_series = Eigen::MatrixXd::Zero(n, m);
  s.g_star_series.resize(n);
  s.sum_psi_series.resize(n);
  if (cv) s.cv_series.resize(n, cv->out_dim);
  std::vector<double> theta(cv ? cv->out_dim : 0);
  for (std::size_t t = 0; t < n; ++t) {
    auto x = traj.state(t);
    bias.evaluate_nonzero(x, nz);
    double total = 0.0;
    for (auto& [j, v] : nz) total += v;
    for (auto& [j, v] : nz) s.psi_star_series(t, col[j]) += v / total;
    s.g_star_series[t] = g(x) / total;
    s.sum_psi_series[t] = total;
    if (cv) {
      cv->map(x, theta);
      for (int k = 0; k < cv->out_dim; ++k) s.cv_series(t, k) = theta[k];
    }
  }
  return s;
}

OverlapMatrix build_overlap(const std::vector<StratumStats>& stats, bool partition_of_unity) {
  if (stats.empty()) throw std::invalid_argument("build_overlap: no strata");
  const int L = static_cast<int>(stats.size());
  OverlapMatrix o;
  o.partition_of_unity = partition_of_unity;
  o.F.resize(L, L);
  for (int i = 0; i < L; ++i) {
    if (stats[i].overlap_row.size() != L)
      throw std::invalid_argument("build_overlap: row length mismatch");
    o.F.row(i) = stats[i].overlap_row.transpose();
  }
  return o;
}

namespace {

void check_entries(const Eigen::MatrixXd& F, Eigen::MatrixXd& cleaned) {
  cleaned = F;
  for (int i = 0; i < F.rows(); ++i)
    for (int j = 0; j < F.cols(); ++j) {
      double v = F(i, j);
      if (v < -1e-12)
        throw std::invalid_argument("stationary_vector: negative overlap entry beyond tolerance");
      if (v < 0.0) cleaned(i, j) = 0.0;
    }
}

void check_irreducible(const Eigen::MatrixXd& F, const char* who) {
  const int L = static_cast<int>(F.rows());
  auto rep = check_irreducibility_matrix([&](int a, int b) { return F(a, b) > 0.0; }, L);
  if (!rep.irreducible)
    throw ReducibleMatrixError(std::string(who) + ": matrix is reducible", rep.witness);
}

// Grassmann-Taksar-Heyman elimination; input nonnegative irreducible with
// rows summing to ~1. Uses off-diagonal entries only, so small row-sum noise
// does not propagate.
Eigen::VectorXd gth(Eigen::MatrixXd P) {
  const int L = static_cast<int>(P.rows());
  for (int n = L - 1; n >= 1; --n) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += P(n, j);
    if (!(s > 0.0)) throw std::runtime_error("stationary solve: zero pivot (reducible input)");
    for (int i = 0; i < n; ++i) P(i, n) /= s;
    for (int i = 0; i < n; ++i) {
      double pin = P(i, n);
      if (pin == 0.0) continue;
      for (int j = 0; j < n; ++j) P(i, j) += pin * P(n, j);
    }
  }
  Eigen::VectorXd z(L);
  z[0] = 1.0;
  for (int n = 1; n < L; ++n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += z[i] * P(i, n);
    z[n] = acc;
  }
  return z / z.sum();
}

}  // namespace

WeightVector stationary_vector(const OverlapMatrix& overlap) {
  const auto& F = overlap.F;
  if (F.rows() != F.cols()) throw std::invalid_argument("stationary_vector: square matrix required");
  const int L = static_cast<int>(F.rows());
  WeightVector w;
  if (L == 1) {
    w.z = Eigen::VectorXd::Ones(1);
    w.residual = std::fabs(F(0, 0) - 1.0);
    return w;
  }
  Eigen::MatrixXd cleaned;
  check_entries(F, cleaned);
  check_irreducible(cleaned, "stationary_vector");
  w.z = gth(cleaned);
  for (int i = 0; i < L; ++i)
    if (w.z[i] < 0.0) w.z[i] = 0.0;  // clip roundoff noise
  w.z /= w.z.sum();
  w.residual = (w.z.transpose() * F - w.z.transpose()).cwiseAbs().maxCoeff();
  return w;
}

double emus_estimate(const std::vector<StratumStats>& stats, const WeightVector& w) {
  if (static_cast<int>(stats.size()) != w.z.size())
    throw std::invalid_argument("emus_estimate: stats/weights size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    num += w.z[i] * stats[i].mean_g_star;
    den += w.z[i] * stats[i].mean_one_star;
  }
  if (!(den > 0.0)) throw std::runtime_error("emus_estimate: nonpositive normalization");
  return num / den;
}

Eigen::MatrixXd vardi_overlap(const std::vector<StratumStats>& stats, const Eigen::VectorXd& u) {
  const int L = static_cast<int>(stats.size());
  if (u.size() != L) throw std::invalid_argument("vardi_overlap: weight size mismatch");
  for (int i = 0; i < L; ++i) {
    if (!(u[i] > 0.0)) throw std::invalid_argument("vardi_overlap: weights must be positive");
    if (stats[i].psi_star_series.size() == 0)
      throw std::invalid_argument("vardi_overlap: retained series required");
  }
  Eigen::VectorXd counts(L);
  for (int i = 0; i < L; ++i) counts[i] = static_cast<double>(stats[i].count);
  Eigen::VectorXd rate = counts.cwiseQuotient(u);  // N_k / u_k

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    const auto& st = stats[i];
    const int m = static_cast<int>(st.observed.size());
    std::vector<KahanSum> acc(m);
    for (std::size_t t = 0; t < st.count; ++t) {
      double total = st.sum_psi_series[t];
      double denom = 0.0;
      for (int c = 0; c < m; ++c)
        denom += st.psi_star_series(t, c) * total * rate[st.observed[c]];
      double scale = rate[i] / denom;
      for (int c = 0; c < m; ++c)
        acc[c].add(st.psi_star_series(t, c) * total * scale);
    }
    for (int c = 0; c < m; ++c) G(i, st.observed[c]) = acc[c].value() / st.count;
  }
  return G;
}

namespace {

// Left eigenvector for the dominant eigenvalue of a nonnegative matrix with
// positive diagonal. The reweighted overlap matrix is row-stochastic only at
// the fixed point, so the generic eigensolver is used away from it.
Eigen::VectorXd dominant_left_vector(const Eigen::MatrixXd& G) {
  Eigen::VectorXd rows = G.rowwise().sum();
  if ((rows.array() - 1.0).abs().maxCoeff() < 1e-12) return gth(G);
  Eigen::EigenSolver<Eigen::MatrixXd> es(G.transpose());
  if (es.info() != Eigen::Success)
    throw std::runtime_error("iterative_emus: eigenvector solve failed");
  int best = 0;
  for (int k = 1; k < G.rows(); ++k)
    if (es.eigenvalues()[k].real() > es.eigenvalues()[best].real()) best = k;
  Eigen::VectorXd v = es.eigenvectors().col(best).real();
  if (v.sum() < 0.0) v = -v;
  for (int i = 0; i < v.size(); ++i)
    if (v[i] < 0.0) v[i] = 0.0;
  double s = v.sum();
  if (!(s > 0.0)) throw std::runtime_error("iterative_emus: degenerate eigenvector");
  return v / s;
}

}  // namespace

IterativeResult iterative_emus(const std::vector<StratumStats>& stats, Eigen::VectorXd z0,
                               double tol, int max_iter) {
  const int L = static_cast<int>(stats.size());
  if (z0.size() != L) throw std::invalid_argument("iterative_emus: z0 size mismatch");
  for (int i = 0; i < L; ++i)
    if (!(z0[i] > 0.0)) throw std::invalid_argument("iterative_emus: z0 must be positive");
  z0 /= z0.sum();

  Eigen::VectorXd z = z0;
  for (int m = 1; m <= max_iter; ++m) {
    Eigen::MatrixXd G = vardi_overlap(stats, z);
    check_irreducible(G, "iterative_emus");
    Eigen::VectorXd znew = dominant_left_vector(G);
    double rel = 0.0;
    for (int i = 0; i < L; ++i)
      rel = std::max(rel, std::fabs(znew[i] - z[i]) / std::max(z[i], 1e-300));
    z = znew;
    if (rel <= tol) return {z, m};
  }
  throw IterationError("iterative_emus: no convergence within iteration limit", z);
}

IterativeResult iterative_emus(const std::vector<Trajectory>& trajectories, const BiasSet& bias,
                               Eigen::VectorXd z0, double tol, int max_iter) {
  std::vector<StratumStats> stats;
  stats.reserve(trajectories.size());
  Observable one = [](std::span<const double>) { return 1.0; };
  for (const auto& t : trajectories) stats.push_back(accumulate(t, bias, one));
  return iterative_emus(stats, std::move(z0), tol, max_iter);
}

}  // namespace emus
