#include "emus/marginals.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <thread>
#include <unordered_map>

#include "emus/numerics.hpp"

namespace emus {

// ---------------------------------------------------------------------------
// HistogramGrid

std::size_t HistogramGrid::total_bins() const {
  std::size_t n = 1;
  for (int b : bins) n *= b;
  return n;
}

double HistogramGrid::bin_volume() const {
  double v = 1.0;
  for (int k = 0; k < dim(); ++k) v *= (hi[k] - lo[k]) / bins[k];
  return v;
}

long HistogramGrid::locate(std::span<const double> theta) const {
  long idx = 0;
  for (int k = 0; k < dim(); ++k) {
    double u = (theta[k] - lo[k]) / (hi[k] - lo[k]);
    if (u < 0.0 || u > 1.0) return -1;
    int b = std::min(static_cast<int>(u * bins[k]), bins[k] - 1);
    idx = idx * bins[k] + b;
  }
  return idx;
}

std::vector<double> HistogramGrid::center(std::size_t flat) const {
  std::vector<double> c(dim());
  for (int k = dim() - 1; k >= 0; --k) {
    int b = static_cast<int>(flat % bins[k]);
    flat /= bins[k];
    c[k] = lo[k] + (b + 0.5) * (hi[k] - lo[k]) / bins[k];
  }
  return c;
}

double MarginalSurface::integral() const {
  double vol = grid.bin_volume();
  double total = 0.0;
  for (std::size_t b = 0; b < density.size(); ++b)
    if (!empty_bin(b)) total += density[b] * vol;
  return total;
}

void MarginalSurface::export_csv(std::ostream& os, bool log10_density) const {
  os.precision(12);
  for (int k = 0; k < grid.dim(); ++k) os << "center" << k << ',';
  os << (log10_density ? "log10_density" : "density") << ",std_error,samples\n";
  for (std::size_t b = 0; b < density.size(); ++b) {
    auto c = grid.center(b);
    for (double x : c) os << x << ',';
    if (empty_bin(b)) {
      os << ",," << samples[b] << '\n';
    } else {
      double d = log10_density ? std::log10(density[b]) : density[b];
      os << d << ',' << std_error[b] << ',' << samples[b] << '\n';
    }
  }
}

nlohmann::json MarginalSurface::to_json() const {
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t b = 0; b < density.size(); ++b) {
    nlohmann::json row{{"center", grid.center(b)}, {"samples", samples[b]}};
    if (empty_bin(b)) {
      row["density"] = nullptr;
      row["std_error"] = nullptr;
    } else {
      row["density"] = density[b];
      row["std_error"] = std_error[b];
    }
    bins.push_back(std::move(row));
  }
  return nlohmann::json{{"lo", grid.lo}, {"hi", grid.hi}, {"bins", grid.bins},
                        {"cells", std::move(bins)}};
}

// ---------------------------------------------------------------------------
// parallel helpers

int worker_count(int configured) {
  if (const char* env = std::getenv("EMUS_WORKERS")) {
    int w = std::atoi(env);
    if (w > 0) return w;
  }
  if (configured > 0) return configured;
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  workers = std::min<std::size_t>(worker_count(workers), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mutex;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// schedule

InitSchedule build_schedule(const BiasSet& bias, int anchor,
                            const std::vector<std::vector<double>>& seed_points) {
  if (anchor < 0 || anchor >= bias.size())
    throw std::invalid_argument("build_schedule: anchor out of range");
  if (seed_points.empty()) throw std::invalid_argument("build_schedule: no seed points");
  bool any = false;
  for (const auto& p : seed_points)
    if (bias.value(anchor, p) > 0.0) {
      any = true;
      break;
    }
  if (!any)
    throw std::invalid_argument("build_schedule: no seed point inside the anchor support");

  auto graph = support_graph(bias);
  InitSchedule sched;
  std::vector<int> level(bias.size(), -1);
  std::deque<int> queue{anchor};
  level[anchor] = 0;
  sched.order.push_back({anchor, SeedSourceKind::External, -1, 0});
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int v : graph.neighbors[u]) {
      if (v == u || level[v] != -1) continue;
      level[v] = level[u] + 1;
      sched.order.push_back({v, SeedSourceKind::AdjacentStratum, u, level[v]});
      queue.push_back(v);
    }
  }
  for (int i = 0; i < bias.size(); ++i)
    if (level[i] == -1) sched.skipped.push_back(i);
  return sched;
}

// ---------------------------------------------------------------------------
// stratified execution

namespace {

std::vector<std::vector<double>> in_support_points(const BiasSet& bias, int stratum,
                                                   const Trajectory& traj) {
  std::vector<std::vector<double>> pts;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    auto x = traj.state(t);
    if (bias.value(stratum, x) > 0.0) pts.emplace_back(x.begin(), x.end());
  }
  return pts;
}

std::vector<std::vector<double>> draw_seeds(const std::vector<std::vector<double>>& pool,
                                            int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k)
    out.push_back(pool[static_cast<std::size_t>(unif(rng) * pool.size())]);
  return out;
}

// ensembles need non-identical walkers; duplicates get a tiny in-support jitter
void deduplicate_walkers(const BiasSet& bias, int stratum,
                         std::vector<std::vector<double>>& seeds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 1; k < seeds.size(); ++k) {
    bool dup = false;
    for (std::size_t j = 0; j < k; ++j) dup = dup || seeds[j] == seeds[k];
    if (!dup) continue;
    auto original = seeds[k];
    for (int attempt = 0; attempt < 64; ++attempt) {
      double scale = 1e-7 * std::pow(2.0, attempt / 8);
      std::vector<double> cand = original;
      for (auto& c : cand) c += scale * (std::fabs(c) + 1.0) * normal(rng);
      if (bias.value(stratum, cand) > 0.0) {
        seeds[k] = std::move(cand);
        break;
      }
    }
  }
}

}  // namespace

StratifiedRun run_stratified(const TargetModel& target, std::shared_ptr<const BiasSet> bias,
                             const InitSchedule& schedule, const StratifiedConfig& config,
                             const Observable& g,
                             const std::vector<std::vector<double>>& external_seeds,
                             const CollectiveVariable* cv) {
  const int L = bias->size();
  auto graph = support_graph(*bias);

  std::vector<std::optional<Trajectory>> trajectories(L);
  std::vector<int> skipped_unvisited;

  // strata grouped by breadth-first level; a level only needs the previous ones
  int max_level = 0;
  for (const auto& e : schedule.order) max_level = std::max(max_level, e.level);
  std::vector<std::vector<ScheduleEntry>> levels(max_level + 1);
  for (const auto& e : schedule.order) levels[e.level].push_back(e);

  auto sample_stratum = [&](const ScheduleEntry& entry) {
    int i = entry.stratum;
    std::vector<std::vector<double>> pool;
    if (entry.kind == SeedSourceKind::External) {
      for (const auto& p : external_seeds)
        if (bias->value(i, p) > 0.0) pool.push_back(p);
    } else {
      // parent first, then any other visited neighbor
      std::vector<int> sources{entry.source};
      for (int v : graph.neighbors[i])
        if (v != i && v != entry.source) sources.push_back(v);
      for (int s : sources) {
        if (s < 0 || !trajectories[s]) continue;
        auto pts = in_support_points(*bias, i, *trajectories[s]);
        pool.insert(pool.end(), pts.begin(), pts.end());
        if (!pool.empty()) break;
      }
    }
    if (pool.empty()) return;  // ignored: no usable seeds

    std::uint64_t chain_seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
    std::uint64_t draw_seed = derive_seed(config.seed, static_cast<std::uint64_t>(L + i));
    ChainConfig cc{config.steps, config.burn_in, config.thin, chain_seed};
    Trajectory traj;
    switch (config.sampler) {
      case SamplerKind::Rwm: {
        auto seeds = draw_seeds(pool, 1, draw_seed);
        traj = rwm_chain(target, bias.get(), i, seeds[0], cc, config.step);
        break;
      }
      case SamplerKind::Langevin:
      case SamplerKind::LangevinReflected: {
        auto seeds = draw_seeds(pool, 1, draw_seed);
        traj = langevin_chain(target, bias.get(), i, seeds[0], cc, config.dt,
                              config.sampler == SamplerKind::LangevinReflected);
        break;
      }
      case SamplerKind::Ensemble: {
        auto seeds = draw_seeds(pool, config.walkers, draw_seed);
        deduplicate_walkers(*bias, i, seeds, derive_seed(config.seed, 2 * L + i));
        traj = ensemble_chain(target, bias.get(), i, seeds, cc, config.stretch);
        break;
      }
      case SamplerKind::Iid: {
        traj = iid_stratum_chain(config.analytic, *bias, i, config.steps, chain_seed);
        break;
      }
    }
    traj.stratum = i;
    trajectories[i] = std::move(traj);
  };

  for (auto& level : levels) {
    parallel_for(level.size(), config.workers,
                 [&](std::size_t k) { sample_stratum(level[k]); });
  }

  StratifiedRun run;
  for (int i = 0; i < L; ++i) {
    if (trajectories[i])
      run.kept.push_back(i);
    else
      run.restriction.dropped_unvisited.push_back(i);
  }
  if (run.kept.empty()) throw std::runtime_error("run_stratified: no stratum could be sampled");

  auto accumulate_kept = [&](const std::vector<int>& kept) {
    std::shared_ptr<const BiasSet> family = bias;
    if (static_cast<int>(kept.size()) != L)
      family = std::make_shared<SubsetBias>(bias, kept);
    std::vector<StratumStats> stats(kept.size());
    parallel_for(kept.size(), config.workers, [&](std::size_t k) {
      stats[k] = accumulate(*trajectories[kept[k]], *family, g, cv);
      stats[k].stratum = static_cast<int>(k);
    });
    return std::pair{family, std::move(stats)};
  };

  auto [family, stats] = accumulate_kept(run.kept);
  OverlapMatrix overlap = build_overlap(stats, family->partition_of_unity());

  int anchor = schedule.order.front().stratum;
  if (!std::binary_search(run.kept.begin(), run.kept.end(), anchor))
    throw std::runtime_error("run_stratified: anchor stratum was not sampled");
  auto scc = strongly_connected_components(
      [&](int a, int b) { return overlap.F(a, b) > 0.0; }, static_cast<int>(run.kept.size()));
  if (scc.size() > 1) {
    int anchor_local = static_cast<int>(
        std::lower_bound(run.kept.begin(), run.kept.end(), anchor) - run.kept.begin());
    std::vector<int> kept_local;
    for (const auto& comp : scc)
      if (std::binary_search(comp.begin(), comp.end(), anchor_local)) kept_local = comp;
    std::vector<int> kept_original;
    std::vector<bool> in_kept(L, false);
    for (int k : kept_local) {
      kept_original.push_back(run.kept[k]);
      in_kept[run.kept[k]] = true;
    }
    for (int i : run.kept)
      if (!in_kept[i]) run.restriction.dropped_disconnected.push_back(i);
    run.kept = std::move(kept_original);
    std::tie(family, stats) = accumulate_kept(run.kept);
    overlap = build_overlap(stats, family->partition_of_unity());
  }

  run.bias = family;
  run.stats = std::move(stats);
  run.overlap = std::move(overlap);
  run.weights = stationary_vector(run.overlap);
  run.estimate = emus_estimate(run.stats, run.weights);

  std::size_t total = 0;
  for (const auto& s : run.stats) total += s.count;
  for (const auto& s : run.stats)
    run.kappas.push_back(static_cast<double>(s.count) / total);
  for (int i : run.kept) run.acceptance.push_back(trajectories[i]->info.acceptance);

  run.skipped = run.restriction.dropped_unvisited;
  run.skipped.insert(run.skipped.end(), run.restriction.dropped_disconnected.begin(),
                     run.restriction.dropped_disconnected.end());
  std::sort(run.skipped.begin(), run.skipped.end());

  if (config.keep_trajectories)
    for (int i : run.kept) run.trajectories.push_back(std::move(*trajectories[i]));
  return run;
}

// ---------------------------------------------------------------------------
// marginal estimation

MarginalSurface estimate_marginal(const std::vector<StratumStats>& stats,
                                  const OverlapMatrix& overlap, const WeightVector& w,
                                  const std::vector<double>& kappas, const HistogramGrid& grid) {
  const int L = static_cast<int>(stats.size());
  if (L == 0) throw std::invalid_argument("estimate_marginal: no strata");
  if (stats[0].cv_series.size() == 0)
    throw std::invalid_argument("estimate_marginal: collective-variable series required");
  // a lower-dimensional grid bins the leading collective-variable coordinates
  if (stats[0].cv_series.cols() < grid.dim())
    throw std::invalid_argument("estimate_marginal: grid dimension mismatch");

  const std::size_t B = grid.total_bins();
  const double vol = grid.bin_volume();

  double denom = 0.0;
  for (int i = 0; i < L; ++i) denom += w.z[i] * stats[i].mean_one_star;

  // per-stratum bin occupancy: flat bin of each retained state (-1 outside)
  std::vector<std::vector<long>> bin_of(L);
  bool any_inside = false;
  for (int i = 0; i < L; ++i) {
    bin_of[i].resize(stats[i].count);
    for (std::size_t t = 0; t < stats[i].count; ++t) {
      Eigen::VectorXd theta = stats[i].cv_series.row(t).head(grid.dim());
      bin_of[i][t] = grid.locate({theta.data(), static_cast<std::size_t>(theta.size())});
      any_inside = any_inside || bin_of[i][t] >= 0;
    }
  }
  if (!any_inside)
    throw std::invalid_argument("estimate_marginal: grid lies outside the sampled region");

  // per-stratum mean of each bin function (sparse over touched bins)
  std::vector<std::vector<std::pair<long, double>>> bin_means(L);
  std::vector<std::size_t> bin_samples(B, 0);
  for (int i = 0; i < L; ++i) {
    std::unordered_map<long, KahanSum> acc;
    for (std::size_t t = 0; t < stats[i].count; ++t) {
      long b = bin_of[i][t];
      if (b < 0) continue;
      acc[b].add(1.0 / stats[i].sum_psi_series[t]);
      ++bin_samples[b];
    }
    for (auto& [b, s] : acc) bin_means[i].emplace_back(b, s.value() / stats[i].count);
    std::sort(bin_means[i].begin(), bin_means[i].end());
  }

  // covariance blocks of the overlap rows, shared across bins
  std::vector<StratumCovariance> covs(L);
  for (int i = 0; i < L; ++i) covs[i] = estimate_stratum_covariance(stats[i], kappas[i]);

  Eigen::MatrixXd a_sharp = group_inverse(overlap);

  std::size_t total_samples = 0;
  for (const auto& s : stats) total_samples += s.count;

  MarginalSurface surf;
  surf.grid = grid;
  surf.density.assign(B, std::numeric_limits<double>::quiet_NaN());
  surf.std_error.assign(B, std::numeric_limits<double>::quiet_NaN());
  surf.samples = bin_samples;

  // invert bin_means: strata touching each bin
  std::vector<std::vector<int>> touching(B);
  for (int i = 0; i < L; ++i)
    for (auto& [b, v] : bin_means[i]) touching[b].push_back(i);

  std::vector<long> bins_with_data;
  for (std::size_t b = 0; b < B; ++b)
    if (bin_samples[b] > 0) bins_with_data.push_back(static_cast<long>(b));

  std::vector<double> sigma2_bin(B, 0.0);
  parallel_for(bins_with_data.size(), 0, [&](std::size_t idx) {
    long b = bins_with_data[idx];
    Eigen::VectorXd means = Eigen::VectorXd::Zero(L);
    for (int i : touching[b]) {
      auto it = std::lower_bound(bin_means[i].begin(), bin_means[i].end(),
                                 std::pair<long, double>{b, -1.0});
      means[i] = it->second;
    }
    Eigen::VectorXd v = a_sharp * means;
    double s2 = 0.0;
    std::vector<double> series;
    for (int i = 0; i < L; ++i) {
      const auto& sc = covs[i];
      const int m = static_cast<int>(sc.observed.size());
      Eigen::VectorXd vo(m);
      for (int c = 0; c < m; ++c) vo[c] = v[sc.observed[c]];
      double term = vo.dot(sc.sigma * vo);
      bool touches = std::binary_search(touching[b].begin(), touching[b].end(), i);
      if (touches) {
        series.assign(stats[i].count, 0.0);
        for (std::size_t t = 0; t < stats[i].count; ++t)
          if (bin_of[i][t] == b) series[t] = 1.0 / stats[i].sum_psi_series[t];
        auto self_ac = integrated_autocov(series);
        int W = std::max(sc.window, self_ac.window);
        double tau = integrated_cross_cov(series, series, W);
        Eigen::VectorXd rho(m);
        for (int c = 0; c < m; ++c) {
          Eigen::VectorXd col = stats[i].psi_star_series.col(c);
          rho[c] = integrated_cross_cov({col.data(), stats[i].count}, series, W);
        }
        term += 2.0 * vo.dot(rho) + std::max(tau, 0.0);
      }
      s2 += w.z[i] * w.z[i] / kappas[i] * term;
    }
    sigma2_bin[b] = std::max(s2, 0.0);
  });

  for (long b : bins_with_data) {
    Eigen::VectorXd means = Eigen::VectorXd::Zero(L);
    for (int i : touching[b]) {
      auto it = std::lower_bound(bin_means[i].begin(), bin_means[i].end(),
                                 std::pair<long, double>{b, -1.0});
      means[i] = it->second;
    }
    double num = 0.0;
    for (int i = 0; i < L; ++i) num += w.z[i] * means[i];
    surf.density[b] = num / denom / vol;
    surf.std_error[b] = std::sqrt(sigma2_bin[b] / total_samples) / (denom * vol);
  }
  return surf;
}

}  // namespace emus
