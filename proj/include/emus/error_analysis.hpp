#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "emus/estimator.hpp"

namespace emus {

/// Group generalized inverse of I - F for irreducible stochastic F, via the
/// fundamental-matrix identity (I - F + e z^T)^{-1} - e z^T. Satisfies
/// A A# A = A, A# A A# = A#, A A# = A# A.
Eigen::MatrixXd group_inverse(const OverlapMatrix& overlap);

struct AutocovResult {
  double value = 0.0;   // sum over all lags of the autocovariance
  int window = 0;
  bool reliable = true; // false when the window hit half the series length
};

/// Integrated autocovariance with the self-consistent window rule: the
/// smallest W with W >= window_factor * (current integrated-time estimate),
/// capped at half the series length (flagged unreliable at the cap).
AutocovResult integrated_autocov(std::span<const double> series, double window_factor = 5.0);

/// Symmetrized integrated cross-covariance sum_t cov(a_0, b_t) at a fixed
/// window (series are centered internally).
double integrated_cross_cov(std::span<const double> a, std::span<const double> b, int window);

/// Asymptotic covariance block of one stratum's trajectory averages. Only
/// the observed overlap columns are stored; all other rows and columns of
/// sigma are structurally zero (they correspond to vanishing overlap
/// entries).
struct StratumCovariance {
  int stratum = -1;
  double kappa = 0.0;              // sampling fraction N_i / N
  std::vector<int> observed;       // column order of sigma / rho
  Eigen::MatrixXd sigma;           // m x m
  Eigen::VectorXd rho;             // m
  double tau = 0.0;
  int window = 0;
  bool reliable = true;
};

/// Windowed estimate from the retained series; the largest self-consistent
/// window among the column autocovariances is shared by all entries, and the
/// result is projected onto the positive-semidefinite cone.
StratumCovariance estimate_stratum_covariance(const StratumStats& stats, double kappa);

struct VarianceReport {
  double sigma2 = 0.0;
  Eigen::VectorXd per_stratum;
  bool clipped = false;  // negative noise total clipped to zero
  double bound_hitting = std::numeric_limits<double>::quiet_NaN();
  double bound_overlap = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd hitting;  // empty unless bounds were requested
};

/// Asymptotic variance of the stratified estimate:
///   sigma2 = sum_i z_i^2/kappa_i { v.sigma^i v + 2 v.rho_i + tau_i },
/// with v = (I-F)# m and m the vector of per-stratum observable means.
VarianceReport sigma2_us(const OverlapMatrix& overlap, const WeightVector& w,
                         const std::vector<StratumCovariance>& covs,
                         const Eigen::VectorXd& stratum_means, bool with_bounds = false,
                         double pi_abs_g = std::numeric_limits<double>::quiet_NaN());

/// P_i[t_j < t_i]: probability that the index chain driven by F hits j
/// before returning to i, for every ordered pair, by first-step analysis.
Eigen::MatrixXd hitting_probabilities(const OverlapMatrix& overlap);

enum class BoundKind { Hitting, Overlap };

/// 2 sum_i kappa_i^{-1} { tau_i z_i^2 + pi_abs_g^2 tr(sigma^i)
///                        sum_{j != i, F_ij > 0} P_i[t_j < t_i]^{-2} },
/// with F_ij replacing the hitting probability for BoundKind::Overlap.
double variance_upper_bound(const OverlapMatrix& overlap, const WeightVector& w,
                            const std::vector<StratumCovariance>& covs, double pi_abs_g,
                            BoundKind kind, const Eigen::MatrixXd* hitting = nullptr);

/// Logarithmic sensitivities d log w_k / d F_ij along the stochastic-matrix
/// coordinate direction e_i (e_j - e_i)^T.
class LogWeightDerivatives {
 public:
  LogWeightDerivatives(Eigen::MatrixXd a_sharp, Eigen::VectorXd w)
      : a_sharp_(std::move(a_sharp)), w_(std::move(w)) {}
  double operator()(int k, int i, int j) const {
    return w_[i] * (a_sharp_(j, k) - a_sharp_(i, k)) / w_[k];
  }
  int size() const { return static_cast<int>(w_.size()); }
  double max_abs_over_k(int i, int j) const;
  const Eigen::MatrixXd& a_sharp() const { return a_sharp_; }
  const Eigen::VectorXd& weights() const { return w_; }

 private:
  Eigen::MatrixXd a_sharp_;
  Eigen::VectorXd w_;
};

LogWeightDerivatives log_weight_derivatives(const OverlapMatrix& overlap);

}  // namespace emus
