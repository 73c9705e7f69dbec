#include "emus/experiments.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

#include "emus/numerics.hpp"

namespace emus {

using nlohmann::json;

// ---------------------------------------------------------------------------
// tail study

namespace {

AnalyticForm1D tail_form(const std::string& potential) {
  if (potential == "linear") return {1.0, 0.0};
  if (potential == "quadratic") return {0.0, 0.5};
  throw std::invalid_argument("tail study: unknown potential '" + potential + "'");
}

double tail_exact(const std::string& potential, double M) {
  if (potential == "linear") return std::exp(-M);
  return std::erfc(M / std::sqrt(2.0));  // mass ratio of [M,inf) to [0,inf)
}

std::function<double(double)> tail_potential_derivative(const std::string& potential) {
  if (potential == "linear") return [](double) { return 1.0; };
  return [](double x) { return x; };
}

}  // namespace

TailStudyResult run_tail_study(const TailStudy& study) {
  TailStudyResult out;
  auto family = std::make_shared<TailFamily>(
      make_tail_family(study.threshold, tail_potential_derivative(study.potential)));
  const int L = family->size();
  out.strata = L;
  out.exact = tail_exact(study.potential, study.threshold);

  AnalyticForm1D form = tail_form(study.potential);
  const double M = study.threshold;
  Observable g = [M](std::span<const double> x) { return x[0] >= M ? 1.0 : 0.0; };

  out.stats.resize(L);
  parallel_for(L, study.workers, [&](std::size_t i) {
    Trajectory traj = iid_stratum_chain(form, *family, static_cast<int>(i),
                                        study.samples_per_stratum,
                                        derive_seed(study.seed, i));
    out.stats[i] = accumulate(traj, *family, g);
    out.stats[i].stratum = static_cast<int>(i);
  });

  out.overlap = build_overlap(out.stats, true);
  out.weights = stationary_vector(out.overlap);
  out.estimate = emus_estimate(out.stats, out.weights);

  std::vector<StratumCovariance> covs(L);
  Eigen::VectorXd means(L);
  std::uint64_t total = study.samples_per_stratum * L;
  for (int i = 0; i < L; ++i) {
    covs[i] = estimate_stratum_covariance(out.stats[i],
                                          static_cast<double>(study.samples_per_stratum) / total);
    means[i] = out.stats[i].mean_g_star;
  }
  out.variance = sigma2_us(out.overlap, out.weights, covs, means, true, out.estimate);
  if (out.estimate > 0.0)
    out.rel_std_error = std::sqrt(out.variance.sigma2 / total) / out.estimate;
  return out;
}

double direct_tail_estimate(const TailStudy& study, std::uint64_t total_samples,
                            std::uint64_t seed) {
  AnalyticForm1D form = tail_form(study.potential);
  Trajectory draws = iid_chain(form, Interval{0.0, std::numeric_limits<double>::infinity()},
                               total_samples, seed);
  std::uint64_t hits = 0;
  for (std::size_t t = 0; t < draws.size(); ++t)
    if (draws.state(t)[0] >= study.threshold) ++hits;
  return static_cast<double>(hits) / total_samples;
}

// ---------------------------------------------------------------------------
// low-temperature study

double lowtemp_oracle(double beta) {
  // normalized so the integrand stays in [exp(-2 beta), 1]
  auto density = [beta](double x) {
    return std::exp(-beta * (std::cos(4.0 * M_PI * x) + 1.0));
  };
  double upper = integrate(density, 0.5, 1.0, 1e-13);
  double whole = integrate(density, 0.0, 1.0, 1e-13);
  return upper / whole;
}

namespace {
Observable half_indicator() {
  return [](std::span<const double> x) {
    double t = std::fmod(x[0], 1.0);
    if (t < 0.0) t += 1.0;
    return t >= 0.5 ? 1.0 : 0.0;
  };
}
}  // namespace

LowTempStudyResult run_lowtemp_study(const LowTempStudy& study) {
  LowTempStudyResult out;
  const int K = static_cast<int>(std::ceil(study.beta));
  out.strata = K;
  out.oracle = lowtemp_oracle(study.beta);

  TargetModel target = periodic_cosine_target(study.beta);
  auto bias = std::make_shared<IndicatorGrid>(1, K, true);
  const double h = 1.0 / K;

  StratifiedConfig cfg;
  cfg.sampler = study.reflected_dynamics ? SamplerKind::LangevinReflected : SamplerKind::Rwm;
  cfg.steps = study.total_steps / K;
  cfg.burn_in = static_cast<std::uint64_t>(study.burn_in_fraction * cfg.steps);
  cfg.dt = h * h / 72.0;  // proposal noise resolves the box
  cfg.step = 0.5 * h;
  cfg.seed = study.seed;
  cfg.workers = study.workers;

  int anchor = static_cast<int>(std::lround(0.25 * K)) % K;
  std::vector<std::vector<double>> seeds{{0.25}};
  if (bias->value(anchor, seeds[0]) <= 0.0) seeds[0][0] = (anchor + 0.0) * h;

  InitSchedule schedule = build_schedule(*bias, anchor, seeds);
  StratifiedRun run = run_stratified(target, bias, schedule, cfg, half_indicator(), seeds);

  out.estimate = run.estimate;
  out.rel_error = std::fabs(out.estimate - out.oracle) / out.oracle;
  out.restricted = run.restriction.restricted();
  out.skipped = run.skipped;
  out.stationary_residual = run.weights.residual;

  const int kept = static_cast<int>(run.stats.size());
  std::vector<StratumCovariance> covs(kept);
  Eigen::VectorXd means(kept);
  std::size_t total = 0;
  for (const auto& s : run.stats) total += s.count;
  for (int i = 0; i < kept; ++i) {
    covs[i] = estimate_stratum_covariance(run.stats[i], run.kappas[i]);
    means[i] = run.stats[i].mean_g_star;
  }
  VarianceReport var = sigma2_us(run.overlap, run.weights, covs, means);
  out.std_error = std::sqrt(var.sigma2 / total);
  return out;
}

double run_lowtemp_direct(const LowTempStudy& study) {
  TargetModel target = periodic_cosine_target(study.beta);
  ChainConfig cc;
  cc.steps = study.total_steps;
  cc.burn_in = static_cast<std::uint64_t>(study.burn_in_fraction * cc.steps);
  cc.seed = derive_seed(study.seed, 0x5eeduLL);
  std::vector<double> x0{0.25};
  double dt = std::min(1e-4, 2.0 / (study.beta * 16.0 * M_PI * M_PI) / 4.0);
  Trajectory traj = langevin_chain(target, nullptr, 0, x0, cc, dt, false);
  auto g = half_indicator();
  KahanSum acc;
  for (std::size_t t = 0; t < traj.size(); ++t) acc.add(g(traj.state(t)));
  return acc.value() / traj.size();
}

// ---------------------------------------------------------------------------
// mixture study

MixtureStudyResult run_mixture_study(const MixtureStudy& study) {
  using namespace mixture;
  const int K = study.components;
  MixtureStudyResult out;

  // pilot: short unbiased ensemble from a data-driven start
  TargetModel plain = posterior_target(study.data, K);
  std::vector<double> start = default_start(study.data, K);
  std::mt19937_64 rng(derive_seed(study.seed, 0xa11ce));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> walkers;
  int pilot_walkers = std::max(2 * plain.dim, 16);
  while (static_cast<int>(walkers.size()) < pilot_walkers) {
    std::vector<double> w = start;
    for (int k = 0; k < K; ++k) w[k] += 0.02 * study.data.range * normal(rng);
    for (int k = K; k < 2 * K; ++k) w[k] += 0.2 * normal(rng);
    for (int k = 2 * K; k < 3 * K - 1; ++k)
      w[k] = std::clamp(w[k] + 0.03 * normal(rng), 1e-3, 1.0 / K);
    w[3 * K - 1] += 0.2 * normal(rng);
    std::sort(w.begin(), w.begin() + K);  // keep the ordering constraint
    if (std::isfinite(plain.log_density(w))) walkers.push_back(std::move(w));
  }
  ChainConfig pilot_cfg{study.pilot_steps, study.pilot_steps / 2, 2,
                        derive_seed(study.seed, 0x9107)};
  Trajectory pilot = ensemble_chain(plain, nullptr, 0, walkers, pilot_cfg, 2.0);

  std::vector<std::vector<double>> pilot_points;
  for (std::size_t t = 0; t < pilot.size(); ++t) {
    auto x = pilot.state(t);
    pilot_points.emplace_back(x.begin(), x.end());
  }

  // stage 1: stratify log10 lambda_1 only
  auto grid1 = std::make_shared<BilinearGrid>(std::vector<double>{study.grid_lo},
                                              std::vector<double>{study.grid_hi},
                                              std::vector<int>{study.nodes});
  auto cv1 = log10_precision_cv(K, 1);
  auto bias1 = std::make_shared<ComposedBias>(grid1, cv1);
  TargetModel trunc1 = truncated_posterior_target(study.data, K, bias1);

  double h1 = grid1->spacing(0);
  auto node_index = [&](double v) {
    int i = static_cast<int>(std::lround((v - study.grid_lo) / h1));
    return std::clamp(i, 0, study.nodes - 1);
  };
  std::vector<double> l1vals;
  std::vector<double> theta(1);
  for (const auto& p : pilot_points) {
    cv1.map(p, theta);
    l1vals.push_back(theta[0]);
  }
  std::nth_element(l1vals.begin(), l1vals.begin() + l1vals.size() / 2, l1vals.end());
  int anchor1 = node_index(l1vals[l1vals.size() / 2]);

  StratifiedConfig cfg1;
  cfg1.sampler = SamplerKind::Ensemble;
  cfg1.walkers = study.walkers;
  cfg1.steps = study.stage1_steps;
  cfg1.burn_in = study.stage1_burn_in;
  cfg1.thin = study.thin;
  cfg1.seed = derive_seed(study.seed, 1);
  cfg1.workers = study.workers;
  cfg1.keep_trajectories = true;

  Observable one = [](std::span<const double>) { return 1.0; };
  InitSchedule sched1 = build_schedule(*bias1, anchor1, pilot_points);
  StratifiedRun stage1 = run_stratified(trunc1, bias1, sched1, cfg1, one, pilot_points);

  std::vector<std::vector<double>> stage1_points;
  for (const auto& traj : stage1.trajectories)
    for (std::size_t t = 0; t < traj.size(); ++t) {
      auto x = traj.state(t);
      stage1_points.emplace_back(x.begin(), x.end());
    }

  // stage 2: the full 2D family over (log10 lambda_1, log10 lambda_2)
  auto grid2 = std::make_shared<BilinearGrid>(
      std::vector<double>{study.grid_lo, study.grid_lo},
      std::vector<double>{study.grid_hi, study.grid_hi},
      std::vector<int>{study.nodes, study.nodes});
  auto cv2 = log10_precision_cv(K, 2);
  auto bias2 = std::make_shared<ComposedBias>(grid2, cv2);
  TargetModel trunc2 = truncated_posterior_target(study.data, K, bias2);

  std::vector<double> th2(2);
  std::vector<double> l1s, l2s;
  for (const auto& p : stage1_points) {
    cv2.map(p, th2);
    l1s.push_back(th2[0]);
    l2s.push_back(th2[1]);
  }
  std::nth_element(l1s.begin(), l1s.begin() + l1s.size() / 2, l1s.end());
  std::nth_element(l2s.begin(), l2s.begin() + l2s.size() / 2, l2s.end());
  std::array<int, 2> anchor_node{node_index(l1s[l1s.size() / 2]),
                                 node_index(l2s[l2s.size() / 2])};
  int anchor2 = grid2->linear_index(anchor_node);

  StratifiedConfig cfg2 = cfg1;
  cfg2.steps = study.steps;
  cfg2.burn_in = study.burn_in;
  cfg2.seed = derive_seed(study.seed, 2);
  cfg2.keep_trajectories = false;

  InitSchedule sched2 = build_schedule(*bias2, anchor2, stage1_points);
  out.run = run_stratified(trunc2, bias2, sched2, cfg2, one, stage1_points, &cv2);

  out.total_strata = bias2->size();
  out.sampled_strata = static_cast<int>(out.run.kept.size());
  double acc_sum = 0.0;
  for (double a : out.run.acceptance) {
    acc_sum += a;
    out.min_acceptance = std::min(out.min_acceptance, a);
  }
  out.mean_acceptance = out.run.acceptance.empty() ? 0.0 : acc_sum / out.run.acceptance.size();

  HistogramGrid analysis;
  analysis.lo = {study.grid_lo, study.grid_lo};
  analysis.hi = {study.grid_hi, study.grid_hi};
  analysis.bins = {study.analysis_bins, study.analysis_bins};
  out.marginal = estimate_marginal(out.run.stats, out.run.overlap, out.run.weights,
                                   out.run.kappas, analysis);
  out.integral = out.marginal.integral();
  return out;
}

// ---------------------------------------------------------------------------
// artifact writers and CLI entry points

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path);
  os.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << m(i, j);
    }
    os << '\n';
  }
}

void write_vector_csv(const std::filesystem::path& path, const Eigen::VectorXd& v) {
  std::ofstream os(path);
  os.precision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << v[i] << '\n';
}

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  os << j.dump(2) << '\n';
}

json aggregate_stats(const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= values.size();
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = values.size() > 1 ? var / (values.size() - 1) : 0.0;
  return json{{"mean", mean}, {"sd", std::sqrt(var)}, {"count", values.size()}};
}

mixture::Dataset dataset_from_config(const json& s, std::uint64_t seed) {
  if (s.contains("data") && !s.at("data").is_null())
    return mixture::ingest_csv(s.at("data").get<std::string>());
  const json& syn = s.at("synthetic");
  auto means = syn.at("means").get<std::vector<double>>();
  auto sds = syn.at("sds").get<std::vector<double>>();
  auto weights = syn.at("weights").get<std::vector<double>>();
  int n = syn.at("n").get<int>();
  return mixture::Dataset::from_values(
      mixture::sample_mixture_data(n, means, sds, weights, syn.value("seed", seed)));
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  namespace fs = std::filesystem;
  fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir / "matrices");
  fs::create_directories(out_dir / "logs");

  json summary{{"experiment", cfg.experiment}, {"seed", cfg.seed},
               {"replicates", cfg.replicates}};
  json runs = json::array();

  if (cfg.experiment == "tail") {
    const json& s = cfg.sections.at("tail");
    TailStudy base;
    base.threshold = s.at("threshold").get<double>();
    base.potential = s.value("potential", std::string{"linear"});
    base.samples_per_stratum = s.at("samples_per_stratum").get<std::uint64_t>();
    base.workers = cfg.workers;
    std::vector<double> estimates;
    for (int r = 0; r < cfg.replicates; ++r) {
      TailStudy study = base;
      study.seed = derive_seed(cfg.seed, r);
      TailStudyResult res = run_tail_study(study);
      estimates.push_back(res.estimate);
      runs.push_back(json{{"seed", study.seed},
                          {"estimate", res.estimate},
                          {"exact", res.exact},
                          {"rel_error", std::fabs(res.estimate / res.exact - 1.0)},
                          {"rel_std_error", res.rel_std_error}});
      if (r == 0) {
        write_matrix_csv(out_dir / "matrices" / "overlap.csv", res.overlap.F);
        write_vector_csv(out_dir / "matrices" / "weights.csv", res.weights.z);
        summary["estimate"] = res.estimate;
        summary["exact"] = res.exact;
        summary["rel_std_error"] = res.rel_std_error;
        summary["strata"] = res.strata;
        summary["stationary_residual"] = res.weights.residual;
      }
      log << "tail replicate " << r << ": estimate " << res.estimate << " (exact " << res.exact
          << ")\n";
    }
    summary["aggregate"] = aggregate_stats(estimates);
  } else if (cfg.experiment == "lowtemp") {
    const json& s = cfg.sections.at("lowtemp");
    LowTempStudy base;
    base.beta = s.at("beta").get<double>();
    base.total_steps = s.at("total_steps").get<std::uint64_t>();
    base.burn_in_fraction = s.value("burn_in_fraction", 0.1);
    base.workers = cfg.workers;
    std::vector<double> estimates;
    for (int r = 0; r < cfg.replicates; ++r) {
      LowTempStudy study = base;
      study.seed = derive_seed(cfg.seed, r);
      LowTempStudyResult res = run_lowtemp_study(study);
      estimates.push_back(res.estimate);
      runs.push_back(json{{"seed", study.seed},
                          {"estimate", res.estimate},
                          {"oracle", res.oracle},
                          {"rel_error", res.rel_error},
                          {"restricted", res.restricted},
                          {"skipped", res.skipped}});
      if (r == 0) {
        summary["estimate"] = res.estimate;
        summary["oracle"] = res.oracle;
        summary["rel_error"] = res.rel_error;
        summary["strata"] = res.strata;
        summary["restricted"] = res.restricted;
      }
      log << "lowtemp replicate " << r << ": estimate " << res.estimate << " vs oracle "
          << res.oracle << '\n';
    }
    summary["aggregate"] = aggregate_stats(estimates);
  } else if (cfg.experiment == "mixture") {
    const json& s = cfg.sections.at("mixture");
    MixtureStudy study;
    study.data = dataset_from_config(s, cfg.seed);
    study.components = s.value("components", 3);
    study.grid_lo = s.value("grid_lo", -1.0);
    study.grid_hi = s.value("grid_hi", 3.2);
    study.nodes = s.value("nodes", 50);
    study.walkers = s.value("walkers", 100);
    study.steps = s.at("steps").get<std::uint64_t>();
    study.burn_in = s.value("burn_in", std::uint64_t{0});
    study.thin = s.value("thin", 10);
    study.stage1_steps = s.value("stage1_steps", std::uint64_t{3000});
    study.stage1_burn_in = s.value("stage1_burn_in", std::uint64_t{1500});
    study.pilot_steps = s.value("pilot_steps", std::uint64_t{2000});
    study.analysis_bins = s.value("analysis_bins", 200);
    study.seed = cfg.seed;
    study.workers = cfg.workers;
    MixtureStudyResult res = run_mixture_study(study);
    fs::create_directories(out_dir / "marginals");
    {
      std::ofstream os(out_dir / "marginals" / "surface.csv");
      res.marginal.export_csv(os);
    }
    {
      std::ofstream os(out_dir / "marginals" / "surface_log10.csv");
      res.marginal.export_csv(os, true);
    }
    write_json(out_dir / "marginals" / "surface.json", res.marginal.to_json());
    write_matrix_csv(out_dir / "matrices" / "overlap.csv", res.run.overlap.F);
    write_vector_csv(out_dir / "matrices" / "weights.csv", res.run.weights.z);
    summary["sampled_strata"] = res.sampled_strata;
    summary["total_strata"] = res.total_strata;
    summary["mean_acceptance"] = res.mean_acceptance;
    summary["min_acceptance"] = res.min_acceptance;
    summary["marginal_integral"] = res.integral;
    summary["skipped"] = res.run.skipped;
    summary["unboundedness"] = [&] {
      auto rep = mixture::unboundedness_check(study.data, study.components, 0.2, 2.0);
      return json{{"unbounded", rep.unbounded},
                  {"threshold", rep.threshold},
                  {"max_frequency", rep.frequency}};
    }();
    log << "mixture: sampled " << res.sampled_strata << " of " << res.total_strata
        << " strata, marginal integral " << res.integral << '\n';
  } else {
    throw ConfigError("experiment", "custom experiments are driven through the library API");
  }

  summary["runs"] = std::move(runs);
  write_json(out_dir / "summary.json", summary);
  std::ofstream run_log(out_dir / "logs" / "run.log");
  run_log << "completed " << cfg.experiment << " with " << cfg.replicates << " replicate(s)\n";
}

void run_compare_direct(const ExperimentConfig& cfg, std::ostream& log) {
  validate_config(cfg, true);
  namespace fs = std::filesystem;
  fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  std::uint64_t budget = stratified_budget(cfg);

  json cmp{{"experiment", cfg.experiment}, {"seed", cfg.seed}, {"total_samples", budget}};

  if (cfg.experiment == "tail") {
    const json& s = cfg.sections.at("tail");
    TailStudy study;
    study.threshold = s.at("threshold").get<double>();
    study.potential = s.value("potential", std::string{"linear"});
    study.samples_per_stratum = s.at("samples_per_stratum").get<std::uint64_t>();
    study.workers = cfg.workers;
    json reps = json::array();
    int zero_hits = 0;
    for (int r = 0; r < cfg.replicates; ++r) {
      study.seed = derive_seed(cfg.seed, r);
      TailStudyResult res = run_tail_study(study);
      double direct = direct_tail_estimate(study, budget, derive_seed(cfg.seed, 1000 + r));
      if (direct == 0.0) ++zero_hits;
      reps.push_back(json{{"stratified", res.estimate},
                          {"direct", direct},
                          {"exact", res.exact}});
      log << "replicate " << r << ": stratified " << res.estimate << ", direct " << direct
          << '\n';
    }
    cmp["replicates"] = std::move(reps);
    cmp["direct_zero_estimates"] = zero_hits;
  } else if (cfg.experiment == "lowtemp") {
    const json& s = cfg.sections.at("lowtemp");
    LowTempStudy study;
    study.beta = s.at("beta").get<double>();
    study.total_steps = s.at("total_steps").get<std::uint64_t>();
    study.burn_in_fraction = s.value("burn_in_fraction", 0.1);
    study.workers = cfg.workers;
    json reps = json::array();
    for (int r = 0; r < cfg.replicates; ++r) {
      study.seed = derive_seed(cfg.seed, r);
      LowTempStudyResult res = run_lowtemp_study(study);
      double direct = run_lowtemp_direct(study);
      reps.push_back(json{{"stratified", res.estimate},
                          {"direct", direct},
                          {"oracle", res.oracle},
                          {"stratified_rel_error", res.rel_error},
                          {"direct_rel_error", std::fabs(direct - res.oracle) / res.oracle}});
      log << "replicate " << r << ": stratified " << res.estimate << ", direct " << direct
          << " (oracle " << res.oracle << ")\n";
    }
    cmp["replicates"] = std::move(reps);
  } else if (cfg.experiment == "mixture") {
    const json& s = cfg.sections.at("mixture");
    MixtureStudy study;
    study.data = dataset_from_config(s, cfg.seed);
    study.components = s.value("components", 3);
    study.grid_lo = s.value("grid_lo", -1.0);
    study.grid_hi = s.value("grid_hi", 3.2);
    study.nodes = s.value("nodes", 50);
    study.walkers = s.value("walkers", 100);
    study.steps = s.at("steps").get<std::uint64_t>();
    study.burn_in = s.value("burn_in", std::uint64_t{0});
    study.thin = s.value("thin", 10);
    study.stage1_steps = s.value("stage1_steps", std::uint64_t{3000});
    study.stage1_burn_in = s.value("stage1_burn_in", std::uint64_t{1500});
    study.pilot_steps = s.value("pilot_steps", std::uint64_t{2000});
    study.analysis_bins = s.value("analysis_bins", 200);
    study.seed = cfg.seed;
    study.workers = cfg.workers;
    MixtureStudyResult res = run_mixture_study(study);

    HistogramGrid grid1d;
    grid1d.lo = {study.grid_lo};
    grid1d.hi = {study.grid_hi};
    grid1d.bins = {study.analysis_bins};
    MarginalSurface stratified = estimate_marginal(res.run.stats, res.run.overlap,
                                                   res.run.weights, res.run.kappas, grid1d);

    // unbiased reference at the matched budget
    using namespace mixture;
    TargetModel plain = posterior_target(study.data, study.components);
    auto cv = log10_precision_cv(study.components, 2);
    std::uint64_t want = budget / study.walkers + 1;
    ChainConfig cc{study.burn_in + want * study.thin, study.burn_in, study.thin,
                   derive_seed(cfg.seed, 0xd12ec7)};
    std::vector<double> start = default_start(study.data, study.components);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xa11ce));
    std::normal_distribution<double> normal(0.0, 1.0);
    const int K = study.components;
    std::vector<std::vector<double>> walkers;
    while (static_cast<int>(walkers.size()) < study.walkers) {
      std::vector<double> w = start;
      for (int k = 0; k < K; ++k) w[k] += 0.02 * study.data.range * normal(rng);
      for (int k = K; k < 2 * K; ++k) w[k] += 0.2 * normal(rng);
      std::sort(w.begin(), w.begin() + K);
      if (std::isfinite(plain.log_density(w))) walkers.push_back(std::move(w));
    }
    Trajectory direct = ensemble_chain(plain, nullptr, 0, walkers, cc, 2.0);
    UniformBias whole(plain.dim);
    Observable one = [](std::span<const double>) { return 1.0; };
    std::vector<StratumStats> direct_stats{accumulate(direct, whole, one, &cv)};
    direct_stats[0].stratum = 0;
    OverlapMatrix unit = build_overlap(direct_stats, true);
    WeightVector wv = stationary_vector(unit);
    MarginalSurface reference =
        estimate_marginal(direct_stats, unit, wv, {1.0}, grid1d);

    std::ofstream os(out_dir / "marginal_comparison.csv");
    os.precision(12);
    os << "center,stratified_density,stratified_se,direct_density,direct_se\n";
    for (std::size_t b = 0; b < stratified.density.size(); ++b) {
      os << grid1d.center(b)[0] << ',';
      if (!stratified.empty_bin(b))
        os << stratified.density[b] << ',' << stratified.std_error[b] << ',';
      else
        os << ",,";
      if (!reference.empty_bin(b))
        os << reference.density[b] << ',' << reference.std_error[b];
      else
        os << ',';
      os << '\n';
    }
    cmp["stratified_integral"] = stratified.integral();
    cmp["direct_integral"] = reference.integral();
    cmp["direct_retained"] = direct.size();
    log << "mixture comparison: stratified covers "
        << res.sampled_strata << " strata; direct retained " << direct.size() << " states\n";
  } else {
    throw ConfigError("experiment", "compare-direct supports tail, lowtemp and mixture");
  }
  write_json(out_dir / "comparison.json", cmp);
}

}  // namespace emus
