#pragma once

#include <filesystem>
#include <map>

#include <Eigen/Dense>
#include <json.hpp>

#include "emus/bias.hpp"
#include "emus/target.hpp"

namespace emus::mixture {

/// Parameters of a K-component Gaussian mixture under the identifiability
/// ordering mu_1 <= ... <= mu_K; q holds the first K-1 component weights.
struct MixtureParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd lambda;  // precisions
  Eigen::VectorXd q;       // length K-1
  double beta = 1.0;       // precision-prior rate hyperparameter

  int components() const { return static_cast<int>(mu.size()); }
  nlohmann::json to_json() const;
  static MixtureParams from_json(const nlohmann::json& j);
};

struct Dataset {
  std::vector<double> y;
  double mean = 0.0;
  double range = 0.0;
  std::map<double, int> frequency;  // exact-equality grouping

  int size() const { return static_cast<int>(y.size()); }
  static Dataset from_values(std::vector<double> values);
};

/// One numeric value per line (single-column CSV). Non-numeric rows raise
/// with the offending line number.
Dataset ingest_csv(const std::filesystem::path& path);

struct Hyperparameters {
  double m = 0.0;      // prior mean center
  double kappa = 0.0;  // prior mean precision
  double alpha = 2.0;  // precision-prior shape
  double g = 0.2;      // rate-hyperprior shape
  double h = 0.0;      // rate-hyperprior rate

  /// m = data mean, kappa = 4/R^2, alpha = 2, g = 0.2, h = 100 g/(alpha R^2).
  static Hyperparameters standard(const Dataset& data);
};

enum class ParamFlag {
  Ok,
  NonpositivePrecision,
  NonpositiveBeta,
  OrderingViolated,
  WeightsOutsideSimplex,
};

struct LogDensity {
  double value = -std::numeric_limits<double>::infinity();
  ParamFlag flag = ParamFlag::Ok;
};

/// Unnormalized log posterior (the component-count normalizer is omitted),
/// evaluated entirely in log space with log-sum-exp over components per
/// datum. Invalid parameters yield -inf with a reason flag; with
/// enforce_ordering=false the label-permutation-invariant density is
/// evaluated instead.
LogDensity log_posterior(const MixtureParams& params, const Dataset& data,
                         const Hyperparameters& hp, int K, bool enforce_ordering = true);

/// log posterior + log sum_ij psi_ij(theta); -inf outside the union of the
/// supports of the composed bias family.
LogDensity truncated_log_posterior(const MixtureParams& params, const Dataset& data,
                                   const Hyperparameters& hp, int K, const BiasSet& bias);

struct UnboundednessReport {
  bool unbounded = false;
  double datum = 0.0;
  int frequency = 0;
  double threshold = 0.0;  // 2g + 2(K-1) alpha
};

/// Flags any datum whose exact-equality frequency exceeds 2g + 2(K-1)alpha,
/// in which case the posterior density is unbounded along a collapsing
/// component.
UnboundednessReport unboundedness_check(const Dataset& data, int K, double g, double alpha);

/// Sampler-facing parameterization: phi = (mu_1..mu_K, log lambda_1..K,
/// q_1..q_{K-1}, log beta), dimension 3K. The density includes the Jacobian
/// of the log transforms.
int packed_dim(int K);
std::vector<double> pack(const MixtureParams& params);
MixtureParams unpack(std::span<const double> phi, int K);

TargetModel posterior_target(const Dataset& data, int K);
TargetModel truncated_posterior_target(const Dataset& data, int K,
                                       std::shared_ptr<const BiasSet> bias);

/// Collective variable (log10 lambda_1, ..., log10 lambda_count) on the
/// packed parameterization.
CollectiveVariable log10_precision_cv(int K, int count = 2);

/// Draws n values from a Gaussian mixture; component parameters are given in
/// mean-sorted order.
std::vector<double> sample_mixture_data(int n, std::span<const double> means,
                                        std::span<const double> sds,
                                        std::span<const double> weights, std::uint64_t seed);

/// Rough data-driven starting point (quantile means, pooled precisions).
std::vector<double> default_start(const Dataset& data, int K);

}  // namespace emus::mixture
