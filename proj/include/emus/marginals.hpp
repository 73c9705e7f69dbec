#pragma once

#include <memory>
#include <optional>

#include "emus/error_analysis.hpp"
#include "emus/estimator.hpp"
#include "emus/samplers.hpp"
#include "emus/target.hpp"

namespace emus {

/// Regular histogram grid in the collective variable.
struct HistogramGrid {
  std::vector<double> lo, hi;
  std::vector<int> bins;

  int dim() const { return static_cast<int>(bins.size()); }
  std::size_t total_bins() const;
  double bin_volume() const;
  /// Flat bin index or -1 when outside the grid.
  long locate(std::span<const double> theta) const;
  std::vector<double> center(std::size_t flat) const;
};

struct MarginalSurface {
  HistogramGrid grid;
  std::vector<double> density;     // NaN on empty bins
  std::vector<double> std_error;   // NaN on empty bins
  std::vector<std::size_t> samples;

  bool empty_bin(std::size_t b) const { return samples[b] == 0; }
  /// sum(density * bin volume) over non-empty bins.
  double integral() const;
  void export_csv(std::ostream& os, bool log10_density = false) const;
  nlohmann::json to_json() const;
};

/// Per-bin averages of histogram bins with delta-method standard errors.
/// Bins that received no samples are reported as missing (NaN), never as
/// zero density.
MarginalSurface estimate_marginal(const std::vector<StratumStats>& stats,
                                  const OverlapMatrix& overlap, const WeightVector& w,
                                  const std::vector<double>& kappas, const HistogramGrid& grid);

enum class SeedSourceKind { External, AdjacentStratum };

struct ScheduleEntry {
  int stratum = -1;
  SeedSourceKind kind = SeedSourceKind::External;
  int source = -1;  // parent stratum for AdjacentStratum
  int level = 0;    // breadth-first depth; equal levels may run concurrently
};

struct InitSchedule {
  std::vector<ScheduleEntry> order;
  std::vector<int> skipped;  // supports unreachable from the anchor
};

/// Breadth-first sweep over the support graph from the anchor stratum
/// (neighbors in ascending index order). At least one seed point must lie in
/// the anchor's support.
InitSchedule build_schedule(const BiasSet& bias, int anchor,
                            const std::vector<std::vector<double>>& seed_points);

enum class SamplerKind { Rwm, Langevin, LangevinReflected, Ensemble, Iid };

struct StratifiedConfig {
  SamplerKind sampler = SamplerKind::Rwm;
  std::uint64_t steps = 10000;  // per stratum; ensemble counts sweeps
  std::uint64_t burn_in = 0;
  int thin = 1;
  double step = 0.25;           // rwm proposal scale
  double dt = 1e-3;             // langevin time step
  int walkers = 32;             // ensemble
  double stretch = 2.0;         // ensemble
  AnalyticForm1D analytic;      // iid
  std::uint64_t seed = 1;
  int workers = 0;              // 0: hardware concurrency; EMUS_WORKERS overrides
  bool keep_trajectories = false;
};

struct RestrictionReport {
  std::vector<int> dropped_unvisited;     // never sampled (no usable seeds)
  std::vector<int> dropped_disconnected;  // sampled but outside the anchor's component
  bool restricted() const {
    return !dropped_unvisited.empty() || !dropped_disconnected.empty();
  }
};

struct StratifiedRun {
  std::vector<int> kept;       // original stratum indices, ascending
  std::vector<int> skipped;    // union of the dropped sets
  RestrictionReport restriction;
  std::shared_ptr<const BiasSet> bias;  // the family actually estimated (subset when restricted)
  std::vector<StratumStats> stats;      // aligned with `kept`
  std::vector<double> kappas;
  OverlapMatrix overlap;
  WeightVector weights;
  double estimate = 0.0;
  std::vector<double> acceptance;       // aligned with `kept`
  std::vector<Trajectory> trajectories; // kept strata; populated when requested
};

/// Executes the schedule: seeds every stratum from in-support points of its
/// source (falling back to any visited neighbor), samples it, and assembles
/// the estimate. Strata whose sources offer no in-support points are skipped
/// with a warning entry; if the sampled overlap matrix is reducible the
/// problem is restricted to the strongly connected component of the anchor
/// and the restriction is reported.
StratifiedRun run_stratified(const TargetModel& target, std::shared_ptr<const BiasSet> bias,
                             const InitSchedule& schedule, const StratifiedConfig& config,
                             const Observable& g,
                             const std::vector<std::vector<double>>& external_seeds,
                             const CollectiveVariable* cv = nullptr);

/// Deterministic ordered parallel map: fn(i) for i in [0, n), results joined
/// in index order.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

int worker_count(int configured);

}  // namespace emus
