#pragma once

#include <cstdint>
#include <optional>

#include "emus/bias.hpp"
#include "emus/target.hpp"
#include "emus/trajectory.hpp"

namespace emus {

struct ChainConfig {
  std::uint64_t steps = 0;    // retained steps are (steps - burn_in) / thin
  std::uint64_t burn_in = 0;
  int thin = 1;
  std::uint64_t seed = 0;
};

/// Random-walk Metropolis for the density psi_i * pi with isotropic normal
/// proposals of scale `step`. Proposals outside the stratum support or the
/// target domain are rejected. `bias` may be null for an unstratified chain.
Trajectory rwm_chain(const TargetModel& target, const BiasSet* bias, int stratum,
                     std::span<const double> x0, const ChainConfig& cfg, double step);

/// Euler-Maruyama discretization of the overdamped dynamics
///   x <- x + dt * grad log(psi_i pi)(x) + sqrt(2 dt) xi.
/// With `reflected`, each coordinate is folded back into the stratum box by
/// mirror reflection (box support required). For piecewise-constant bias the
/// drift is grad log pi alone and excursions out of the support are
/// rejected; for smooth bias a Metropolis correction keeps psi_i pi exactly
/// invariant (MALA).
Trajectory langevin_chain(const TargetModel& target, const BiasSet* bias, int stratum,
                          std::span<const double> x0, const ChainConfig& cfg, double dt,
                          bool reflected);

/// Affine-invariant ensemble sampler (stretch moves). The trajectory is the
/// concatenated walker stream; cfg.steps counts sweeps over the ensemble.
Trajectory ensemble_chain(const TargetModel& target, const BiasSet* bias, int stratum,
                          const std::vector<std::vector<double>>& walker_starts,
                          const ChainConfig& cfg, double stretch = 2.0);

/// Density exp(-(c1 x + c2 x^2)) restricted to an interval or half-line.
struct AnalyticForm1D {
  double c1 = 0.0;
  double c2 = 0.0;
};

/// Independent draws by inverse CDF. Supports c2 = 0 (exponential / flat,
/// bounded support required when the exponential rate is <= 0) and c2 > 0
/// (Gaussian). Other forms are rejected.
Trajectory iid_chain(const AnalyticForm1D& form, Interval support, std::uint64_t n,
                     std::uint64_t seed);

/// Restriction of a 1D analytic target to the support of stratum i. Requires
/// the bias function to be constant on its support (indicator families).
Trajectory iid_stratum_chain(const AnalyticForm1D& form, const BiasSet& bias, int stratum,
                             std::uint64_t n, std::uint64_t seed);

}  // namespace emus
