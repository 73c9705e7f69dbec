#pragma once

#include <iosfwd>

#include "emus/config.hpp"
#include "emus/error_analysis.hpp"
#include "emus/marginals.hpp"
#include "emus/mixture.hpp"

namespace emus {

// ---------------------------------------------------------------------------
// Tail probabilities of exp(-V) on [0, inf)

struct TailStudy {
  double threshold = 20.0;
  std::string potential = "linear";  // "linear": V=x, "quadratic": V=x^2/2
  std::uint64_t samples_per_stratum = 10000;
  std::uint64_t seed = 1;
  int workers = 0;
};

struct TailStudyResult {
  int strata = 0;
  double estimate = 0.0;
  double exact = 0.0;
  double rel_std_error = 0.0;
  std::vector<StratumStats> stats;
  OverlapMatrix overlap;
  WeightVector weights;
  VarianceReport variance;
};

TailStudyResult run_tail_study(const TailStudy& study);

/// Plain Monte Carlo estimate of the same tail probability from
/// total_samples independent draws of the target.
double direct_tail_estimate(const TailStudy& study, std::uint64_t total_samples,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Low-temperature double well on the periodic interval

struct LowTempStudy {
  double beta = 5.0;
  std::uint64_t total_steps = 1000000;  // summed over strata, burn-in included
  double burn_in_fraction = 0.1;
  // within-stratum kernel: random-walk Metropolis keeps each biased
  // distribution exactly invariant; the reflected dynamics trades an O(dt)
  // bias for diffusion-like moves
  bool reflected_dynamics = false;
  std::uint64_t seed = 1;
  int workers = 0;
};

struct LowTempStudyResult {
  int strata = 0;
  double estimate = 0.0;
  double oracle = 0.0;
  double rel_error = 0.0;
  double std_error = 0.0;
  bool restricted = false;
  std::vector<int> skipped;
  double stationary_residual = 0.0;
};

LowTempStudyResult run_lowtemp_study(const LowTempStudy& study);

/// Unstratified overdamped dynamics at the same budget; returns the
/// trajectory average of the same observable.
double run_lowtemp_direct(const LowTempStudy& study);

/// Quadrature value of the observable (mass of the half interval holding the
/// second well).
double lowtemp_oracle(double beta);

// ---------------------------------------------------------------------------
// Mixture-posterior marginal study

struct MixtureStudy {
  mixture::Dataset data;
  int components = 3;
  double grid_lo = -1.0;
  double grid_hi = 3.2;
  int nodes = 50;            // bias nodes per axis
  int walkers = 100;
  std::uint64_t steps = 7000;  // per stratum, burn-in included
  std::uint64_t burn_in = 4500;
  int thin = 10;
  std::uint64_t stage1_steps = 3000;
  std::uint64_t stage1_burn_in = 1500;
  std::uint64_t pilot_steps = 2000;
  int analysis_bins = 200;
  std::uint64_t seed = 1;
  int workers = 0;
};

struct MixtureStudyResult {
  StratifiedRun run;         // 2D stage
  MarginalSurface marginal;  // re-binned analysis surface
  double integral = 0.0;
  double mean_acceptance = 0.0;
  double min_acceptance = 1.0;
  int sampled_strata = 0;
  int total_strata = 0;
};

MixtureStudyResult run_mixture_study(const MixtureStudy& study);

// ---------------------------------------------------------------------------
// CLI entry points (write artifacts under cfg.output_dir)

void run_experiment(const ExperimentConfig& cfg, std::ostream& log);
void run_compare_direct(const ExperimentConfig& cfg, std::ostream& log);

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
void write_vector_csv(const std::filesystem::path& path, const Eigen::VectorXd& v);

}  // namespace emus
