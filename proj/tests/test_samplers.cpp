#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "emus/error_analysis.hpp"
#include "emus/samplers.hpp"
#include "emus/target.hpp"
#include "oracles.hpp"

using namespace emus;

namespace {

std::vector<double> coordinate_series(const Trajectory& traj, int k) {
  std::vector<double> xs(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) xs[t] = traj.state(t)[k];
  return xs;
}

// standard error of a trajectory mean via the integrated autocovariance
double traj_se(std::span<const double> xs) {
  auto ac = integrated_autocov(xs);
  return std::sqrt(std::max(ac.value, 0.0) / xs.size());
}

}  // namespace

TEST_CASE("samplers are deterministic given the seed") {
  TargetModel gauss = gaussian_target();
  ChainConfig cfg{2000, 100, 2, 42};
  double x0[1] = {0.3};

  auto a = rwm_chain(gauss, nullptr, 0, std::span<const double>(x0, 1), cfg, 0.7);
  auto b = rwm_chain(gauss, nullptr, 0, std::span<const double>(x0, 1), cfg, 0.7);
  REQUIRE(a.raw() == b.raw());

  auto la = langevin_chain(gauss, nullptr, 0, std::span<const double>(x0, 1), cfg, 1e-3, false);
  auto lb = langevin_chain(gauss, nullptr, 0, std::span<const double>(x0, 1), cfg, 1e-3, false);
  REQUIRE(la.raw() == lb.raw());

  std::vector<std::vector<double>> walkers{{0.1}, {0.2}, {0.4}, {-0.3}};
  auto ea = ensemble_chain(gauss, nullptr, 0, walkers, cfg, 2.0);
  auto eb = ensemble_chain(gauss, nullptr, 0, walkers, cfg, 2.0);
  REQUIRE(ea.raw() == eb.raw());

  auto ia = iid_chain({1.0, 0.0}, {0.0, 5.0}, 1000, 9);
  auto ib = iid_chain({1.0, 0.0}, {0.0, 5.0}, 1000, 9);
  REQUIRE(ia.raw() == ib.raw());
}

TEST_CASE("rwm on a flat stratum is uniform") {
  TargetModel flat = flat_target({0.0}, {1.0});
  IndicatorGrid grid(1, 1, false);  // two strata covering [0,1]
  double x0[1] = {0.2};
  ChainConfig cfg{100000, 1000, 1, 7};
  auto traj = rwm_chain(flat, &grid, 0, std::span<const double>(x0, 1), cfg, 0.3);
  // stratum 0 support is [0,1] clipped to the domain => [0,1) up to the box
  for (std::size_t t = 0; t < traj.size(); ++t)
    REQUIRE(grid.value(0, traj.state(t)) > 0.0);
  auto xs = coordinate_series(traj, 0);
  auto mv = oracles::mean_var(xs);
  double se = traj_se(xs);
  REQUIRE(std::fabs(mv.mean - 0.5) <= 3.0 * se);
}

TEST_CASE("rwm with an oversized step freezes") {
  TargetModel flat = flat_target({0.0}, {1.0});
  BilinearGrid grid({0.0}, {1.0}, {101});  // narrow pyramids, width 0.02
  double x0[1] = {0.5};
  ChainConfig cfg{2000, 0, 1, 3};
  auto traj = rwm_chain(flat, &grid, 50, std::span<const double>(x0, 1), cfg, 1e6);
  REQUIRE(traj.info.acceptance == 0.0);
  for (std::size_t t = 0; t < traj.size(); ++t) REQUIRE(traj.state(t)[0] == 0.5);
}

TEST_CASE("rwm matches a Gaussian target") {
  TargetModel gauss = gaussian_target(0.0, 1.0);
  double x0[1] = {0.0};
  ChainConfig cfg{200000, 2000, 1, 11};
  auto traj = rwm_chain(gauss, nullptr, 0, std::span<const double>(x0, 1), cfg, 2.4);
  auto xs = coordinate_series(traj, 0);
  auto mv = oracles::mean_var(xs);
  // delta-method error bar for the sample variance via the x^2 series
  std::vector<double> sq(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) sq[t] = xs[t] * xs[t];
  REQUIRE(std::fabs(mv.var - 1.0) <= 3.0 * traj_se(sq));
  REQUIRE(std::fabs(mv.mean) <= 3.0 * traj_se(xs));
}

TEST_CASE("rwm errors on bad starts") {
  TargetModel gauss = gaussian_target();
  TailFamily fam(4.0, 4);
  double outside[1] = {3.5};  // outside supp psi_0 = [0,1)
  ChainConfig cfg{100, 0, 1, 1};
  REQUIRE_THROWS_AS(rwm_chain(gauss, &fam, 0, std::span<const double>(outside, 1), cfg, 0.5),
                    std::invalid_argument);
  TargetModel bad = gauss;
  bad.log_density = [](std::span<const double>) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  double x0[1] = {0.5};
  REQUIRE_THROWS_AS(rwm_chain(bad, &fam, 0, std::span<const double>(x0, 1), cfg, 0.5),
                    std::invalid_argument);
}

TEST_CASE("rwm transition counts balance on a three-cell density") {
  // piecewise-constant density over three cells of [0,3]
  TargetModel steps;
  steps.dim = 1;
  steps.domain = Domain::box({0.0}, {3.0});
  steps.log_density = [](std::span<const double> x) {
    int cell = std::min(static_cast<int>(x[0]), 2);
    static const double logw[3] = {0.0, 0.9, -0.4};
    return logw[cell];
  };
  double x0[1] = {1.5};
  ChainConfig cfg{400000, 2000, 1, 17};
  auto traj = rwm_chain(steps, nullptr, 0, std::span<const double>(x0, 1), cfg, 0.8);
  // reversibility: observed i->j and j->i pair counts agree
  Eigen::Matrix3d counts = Eigen::Matrix3d::Zero();
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
    int a = std::min(static_cast<int>(traj.state(t)[0]), 2);
    int b = std::min(static_cast<int>(traj.state(t + 1)[0]), 2);
    counts(a, b) += 1.0;
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      double n1 = counts(a, b), n2 = counts(b, a);
      REQUIRE(std::fabs(n1 - n2) <= 3.0 * std::sqrt(n1 + n2));
    }
}

TEST_CASE("langevin on a flat box stays uniform under reflection") {
  TargetModel flat = flat_target({0.0}, {1.0});
  double x0[1] = {0.4};
  ChainConfig cfg{200000, 1000, 1, 23};
  auto traj = langevin_chain(flat, nullptr, 0, std::span<const double>(x0, 1), cfg, 1e-3, true);
  auto xs = coordinate_series(traj, 0);
  for (double x : xs) {
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
  }
  auto mv = oracles::mean_var(xs);
  REQUIRE(std::fabs(mv.mean - 0.5) <= 3.0 * traj_se(xs));
}

TEST_CASE("unreflected langevin matches the Gaussian invariant") {
  TargetModel gauss = gaussian_target();
  double x0[1] = {0.0};
  ChainConfig cfg{1000000, 5000, 1, 29};
  auto traj = langevin_chain(gauss, nullptr, 0, std::span<const double>(x0, 1), cfg, 1e-3, false);
  auto xs = coordinate_series(traj, 0);
  auto mv = oracles::mean_var(xs);
  REQUIRE(std::fabs(mv.var - 1.0) <= 0.05);  // O(dt) discretization bias allowed
}

TEST_CASE("reflected langevin never exits its stratum box") {
  TargetModel gauss = gaussian_target();
  IndicatorGrid grid(1, 7, false, {-4.0}, {4.0});
  int stratum = 3;
  auto box = grid.support(stratum);
  double x0[1] = {0.5 * (box.axes[0].lo + box.axes[0].hi)};
  ChainConfig cfg{50000, 100, 1, 31};
  auto traj = langevin_chain(gauss, &grid, stratum, std::span<const double>(x0, 1), cfg,
                             1e-4, true);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    REQUIRE(traj.state(t)[0] >= box.axes[0].lo);
    REQUIRE(traj.state(t)[0] <= box.axes[0].hi);
  }
  REQUIRE_THROWS_AS(langevin_chain(gauss, nullptr, 0, std::span<const double>(x0, 1), cfg,
                                   1e-4, true),
                    std::invalid_argument);
}

TEST_CASE("langevin variance scaling with the box size") {
  // fixed smooth potential, shrinking boxes: the asymptotic variance of a
  // fixed bounded observable drops roughly with the squared box size
  TargetModel target;
  target.dim = 1;
  target.domain = Domain::unconstrained(1);
  target.log_density = [](std::span<const double> x) {
    return -(0.5 * x[0] * x[0] + 0.3 * std::sin(3.0 * x[0]));
  };
  target.grad_log_density = [](std::span<const double> x, std::span<double> g) {
    g[0] = -(x[0] + 0.9 * std::cos(3.0 * x[0]));
  };
  const double center = 0.3, dt = 2e-5;
  auto asy_var = [&](double h, std::uint64_t seed) {
    TargetModel boxed = target;
    boxed.domain = Domain::box({center - h}, {center + h});
    double x0[1] = {center};
    ChainConfig cfg{1500000, 10000, 1, seed};
    auto traj = langevin_chain(boxed, nullptr, 0, std::span<const double>(x0, 1), cfg, dt, true);
    std::vector<double> f(traj.size());
    for (std::size_t t = 0; t < traj.size(); ++t)
      f[t] = traj.state(t)[0] >= center ? 1.0 : -1.0;
    return integrated_autocov(f).value;
  };
  double v1 = asy_var(0.2, 101), v2 = asy_var(0.1, 102);
  double ratio = v1 / v2;  // ideally 4
  REQUIRE(ratio >= 2.0);
  REQUIRE(ratio <= 8.0);
}

TEST_CASE("gradient check on the built-in targets") {
  std::vector<double> x{0.37};
  REQUIRE(gradient_fd_error(gaussian_target(), x) <= 1e-5);
  REQUIRE(gradient_fd_error(periodic_cosine_target(5.0), x) <= 1e-5);
}

TEST_CASE("ensemble sampler matches a 2D Gaussian") {
  TargetModel gauss = gaussian_target(0.0, 1.0, 2);
  std::vector<std::vector<double>> walkers;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int w = 0; w < 100; ++w) walkers.push_back({0.3 * normal(rng), 0.3 * normal(rng)});
  ChainConfig cfg{10000, 500, 1, 37};
  auto traj = ensemble_chain(gauss, nullptr, 0, walkers, cfg, 2.0);
  REQUIRE(traj.info.acceptance > 0.1);
  REQUIRE(traj.info.acceptance < 0.9);
  const int W = 100;
  std::size_t sweeps = traj.size() / W;
  for (int k = 0; k < 2; ++k) {
    // error bars from the per-sweep ensemble means (the interleaved walker
    // stream itself looks deceptively uncorrelated)
    std::vector<double> sweep_mean(sweeps, 0.0);
    for (std::size_t s = 0; s < sweeps; ++s) {
      for (int w = 0; w < W; ++w) sweep_mean[s] += traj.state(s * W + w)[k];
      sweep_mean[s] /= W;
    }
    auto mv = oracles::mean_var(sweep_mean);
    REQUIRE(std::fabs(mv.mean) <= 3.0 * traj_se(sweep_mean));
  }
}

TEST_CASE("ensemble sampler rejects degenerate input") {
  TargetModel gauss = gaussian_target();
  ChainConfig cfg{10, 0, 1, 1};
  std::vector<std::vector<double>> one{{0.0}};
  REQUIRE_THROWS_AS(ensemble_chain(gauss, nullptr, 0, one, cfg, 2.0), std::invalid_argument);
  std::vector<std::vector<double>> same{{0.1}, {0.1}, {0.1}};
  REQUIRE_THROWS_AS(ensemble_chain(gauss, nullptr, 0, same, cfg, 2.0), std::invalid_argument);
}

TEST_CASE("iid draws from analytic stratum densities") {
  SECTION("truncated exponential") {
    auto traj = iid_chain({1.0, 0.0}, {2.0, 5.0}, 200000, 41);
    auto xs = coordinate_series(traj, 0);
    for (double x : xs) {
      REQUIRE(x >= 2.0);
      REQUIRE(x <= 5.0);
    }
    // closed-form mean of Exp(1) truncated to [2,5]
    double w = 3.0;
    double mean = 2.0 + 1.0 - w * std::exp(-w) / (1.0 - std::exp(-w));
    auto mv = oracles::mean_var(xs);
    REQUIRE(std::fabs(mv.mean - mean) <= 3.0 * std::sqrt(mv.var / xs.size()));
  }
  SECTION("uniform on a short interval") {
    auto traj = iid_chain({0.0, 0.0}, {0.0, 0.25}, 100000, 43);
    auto xs = coordinate_series(traj, 0);
    auto mv = oracles::mean_var(xs);
    REQUIRE(std::fabs(mv.mean - 0.125) <= 3.0 * std::sqrt(mv.var / xs.size()));
  }
  SECTION("half-line support") {
    auto traj = iid_chain({1.0, 0.0}, {20.0, std::numeric_limits<double>::infinity()},
                          50000, 47);
    double lo = 1e300;
    auto xs = coordinate_series(traj, 0);
    for (double x : xs) lo = std::min(lo, x);
    REQUIRE(lo >= 20.0);
    auto mv = oracles::mean_var(xs);
    REQUIRE(std::fabs(mv.mean - 21.0) <= 3.0 * std::sqrt(mv.var / xs.size()));
  }
  SECTION("truncated Gaussian") {
    auto traj = iid_chain({0.0, 0.5}, {1.0, 2.0}, 200000, 53);
    auto xs = coordinate_series(traj, 0);
    auto I = oracles::gauss_moments(1.0, 2.0);
    double mean = I[1] / I[0];
    auto mv = oracles::mean_var(xs);
    REQUIRE(std::fabs(mv.mean - mean) <= 3.0 * std::sqrt(mv.var / xs.size()));
  }
  SECTION("unsupported forms are rejected") {
    REQUIRE_THROWS_AS(iid_chain({0.0, -1.0}, {0.0, 1.0}, 10, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(
        iid_chain({0.0, 0.0}, {0.0, std::numeric_limits<double>::infinity()}, 10, 1),
        std::invalid_argument);
  }
}

TEST_CASE("trajectories persist to columnar files") {
  TargetModel gauss = gaussian_target(0.0, 1.0, 3);
  double x0[3] = {0.1, -0.2, 0.3};
  ChainConfig cfg{500, 50, 3, 59};
  auto traj = rwm_chain(gauss, nullptr, 0, std::span<const double>(x0, 3), cfg, 1.0);
  traj.stratum = 4;

  auto dir = std::filesystem::temp_directory_path() / "emus_traj_test";
  std::filesystem::create_directories(dir);
  traj.save(dir / "chain");
  auto loaded = Trajectory::load(dir / "chain");
  REQUIRE(loaded.raw() == traj.raw());
  REQUIRE(loaded.dim() == 3);
  REQUIRE(loaded.stratum == 4);
  REQUIRE(loaded.info.seed == traj.info.seed);
  REQUIRE(loaded.info.method == "rwm");

  std::ostringstream csv;
  traj.export_csv(csv);
  std::string first_line = csv.str().substr(0, csv.str().find('\n'));
  REQUIRE(std::count(first_line.begin(), first_line.end(), ',') == 2);
  std::filesystem::remove_all(dir);
}
