#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "emus/bias.hpp"
#include "emus/trajectory.hpp"

namespace emus {

using Observable = std::function<double(std::span<const double>)>;

/// Per-stratum trajectory accumulators. psi-star values are stored only for
/// the strata observed to overlap (columns `observed`); all other entries of
/// the overlap row are exact zeros.
struct StratumStats {
  int stratum = -1;
  std::size_t count = 0;
  std::vector<int> observed;            // sorted; column order of psi_star_series
  Eigen::VectorXd overlap_row;          // length L, mean of psi*_j
  double mean_g_star = 0.0;
  double mean_one_star = 0.0;
  Eigen::MatrixXd psi_star_series;      // count x observed.size()
  Eigen::VectorXd g_star_series;        // count
  Eigen::VectorXd sum_psi_series;       // count   (sum_k psi_k at each state)
  Eigen::MatrixXd cv_series;            // count x cv_dim (empty unless cv given)
};

/// Exact single-pass trajectory means of psi*_j, g*, and 1* with compensated
/// summation. Throws std::runtime_error when sum_k psi_k vanishes at a state.
/// With `cv`, the collective-variable values are cached per retained state so
/// histogram bins can be re-gridded without resampling.
StratumStats accumulate(const Trajectory& traj, const BiasSet& bias, const Observable& g,
                        const CollectiveVariable* cv = nullptr, bool keep_series = true);

struct OverlapMatrix {
  Eigen::MatrixXd F;
  bool partition_of_unity = false;
};

OverlapMatrix build_overlap(const std::vector<StratumStats>& stats, bool partition_of_unity);

struct WeightVector {
  Eigen::VectorXd z;
  double residual = 0.0;  // ||z^T F - z^T||_inf of the solve
};

class ReducibleMatrixError : public std::runtime_error {
 public:
  ReducibleMatrixError(std::string msg, std::vector<int> witness_)
      : std::runtime_error(std::move(msg)), witness(std::move(witness_)) {}
  std::vector<int> witness;
};

class IterationError : public std::runtime_error {
 public:
  IterationError(std::string msg, Eigen::VectorXd last_)
      : std::runtime_error(std::move(msg)), last(std::move(last_)) {}
  Eigen::VectorXd last;
};

/// Unique probability vector with z^T F = z^T, by Grassmann-Taksar-Heyman
/// elimination on I - F (entrywise relative accuracy; no power iteration).
/// Entries below -1e-12 are rejected; tiny negative noise is clipped to zero
/// before the solve. Throws ReducibleMatrixError when F is reducible.
WeightVector stationary_vector(const OverlapMatrix& overlap);

/// General-form estimate (sum_i z_i gbar*_i) / (sum_i z_i onebar*_i); reduces
/// to sum_i w_i gbar_i under a partition of unity.
double emus_estimate(const std::vector<StratumStats>& stats, const WeightVector& z);

struct IterativeResult {
  Eigen::VectorXd weights;
  int iterations = 0;
};

/// Self-consistent (Vardi-type) refinement: repeatedly reweights the overlap
/// averages at the current iterate and solves the eigenvector problem until
/// max_i |z'_i - z_i| / z_i <= tol. The first iterate from z0_i = N_i / N is
/// the plain eigenvector estimate.
IterativeResult iterative_emus(const std::vector<StratumStats>& stats, Eigen::VectorXd z0,
                               double tol = 1e-8, int max_iter = 100);

/// Convenience overload accumulating the trajectories first.
IterativeResult iterative_emus(const std::vector<Trajectory>& trajectories, const BiasSet& bias,
                               Eigen::VectorXd z0, double tol = 1e-8, int max_iter = 100);

/// The reweighted overlap averages used by one iterative step at weights u.
Eigen::MatrixXd vardi_overlap(const std::vector<StratumStats>& stats,
                              const Eigen::VectorXd& u);

}  // namespace emus
