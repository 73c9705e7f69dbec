#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "emus/bias.hpp"
#include "emus/numerics.hpp"
#include "oracles.hpp"

using namespace emus;

namespace {

void check_partition_of_unity(const BiasSet& bias,
                              const std::function<std::vector<double>(std::span<double>)>& remap) {
  QuasiRandomSeq seq(bias.dim());
  std::vector<double> u(bias.dim());
  std::vector<double> psi(bias.size());
  for (int t = 0; t < 10000; ++t) {
    seq.next(u);
    std::vector<double> x = remap(u);
    bias.evaluate(x, psi);
    double total = 0.0;
    for (double v : psi) {
      REQUIRE(v >= 0.0);
      total += v;
    }
    REQUIRE(std::fabs(total - 1.0) <= 1e-12);
  }
}

}  // namespace

TEST_CASE("tail family values at a point") {
  TailFamily fam(1.0, 1);  // M = 1, K = 1, h = 1
  REQUIRE(fam.size() == 3);
  double x[1] = {0.5};
  auto psi = fam.evaluate(std::span<const double>(x, 1));
  REQUIRE(psi[0] == 0.5);
  REQUIRE(psi[1] == 0.5);
  REQUIRE(psi[2] == 0.0);
}

TEST_CASE("tail family resolution rule") {
  auto f1 = make_tail_family(20.0, [](double) { return 1.0; });
  REQUIRE(f1.resolution() == 20);
  REQUIRE(f1.spacing() == 1.0);

  auto f2 = make_tail_family(4.0, [](double x) { return x; });  // V = x^2/2
  REQUIRE(f2.resolution() == 16);
  REQUIRE(f2.spacing() == 0.25);

  REQUIRE_THROWS_AS(
      make_tail_family(2.0, [](double x) { return x > 1.0 ? HUGE_VAL : 1.0; }),
      std::invalid_argument);
}

TEST_CASE("tail family is a partition of unity on the half line") {
  TailFamily fam(4.0, 16);
  check_partition_of_unity(fam, [](std::span<double> u) {
    return std::vector<double>{u[0] * 8.0};  // covers both sides of the threshold
  });
}

TEST_CASE("periodic indicator grid sums to one everywhere") {
  IndicatorGrid grid(1, 4, true);
  REQUIRE(grid.size() == 4);
  check_partition_of_unity(grid, [](std::span<double> u) {
    return std::vector<double>{u[0]};
  });
  // grid points are the delicate spots
  for (int i = 0; i <= 4; ++i) {
    double x[1] = {i / 4.0};
    auto psi = grid.evaluate(std::span<const double>(x, 1));
    double total = 0.0;
    for (double v : psi) total += v;
    REQUIRE(std::fabs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("non-periodic indicator grid covers its box including edges") {
  IndicatorGrid grid(2, 3, false, {-1.0, 0.0}, {2.0, 1.0});
  REQUIRE(grid.size() == 16);
  check_partition_of_unity(grid, [](std::span<double> u) {
    return std::vector<double>{-1.0 + 3.0 * u[0], u[1]};
  });
  double corner[2] = {2.0, 1.0};
  auto psi = grid.evaluate(std::span<const double>(corner, 2));
  double total = 0.0;
  for (double v : psi) total += v;
  REQUIRE(std::fabs(total - 1.0) <= 1e-12);
  double outside[2] = {2.1, 0.5};
  REQUIRE_THROWS_AS(grid.evaluate(std::span<const double>(outside, 2)), std::domain_error);
}

TEST_CASE("bilinear grid peaks at nodes") {
  BilinearGrid grid({-1.0, -1.0}, {3.2, 3.2}, {50, 50});
  REQUIRE(grid.size() == 2500);
  double node[2] = {-1.0, -1.0};
  auto psi = grid.evaluate(std::span<const double>(node, 2));
  REQUIRE(psi[0] == 1.0);
  for (int i = 1; i < grid.size(); ++i) REQUIRE(psi[i] == 0.0);

  check_partition_of_unity(grid, [](std::span<double> u) {
    return std::vector<double>{-1.0 + 4.2 * u[0], -1.0 + 4.2 * u[1]};
  });
}

TEST_CASE("bilinear gradient of log value") {
  BilinearGrid grid({0.0}, {1.0}, {3});
  double x[1] = {0.3};
  double g[1];
  REQUIRE(grid.grad_log_value(1, std::span<const double>(x, 1), std::span<double>(g, 1)));
  // psi_1 = 1 - |x - 0.5| / 0.5, increasing left of the node
  double h = 1e-7;
  double xp[1] = {0.3 + h}, xm[1] = {0.3 - h};
  double fd = (std::log(grid.value(1, std::span<const double>(xp, 1))) -
               std::log(grid.value(1, std::span<const double>(xm, 1)))) /
              (2 * h);
  REQUIRE(std::fabs(g[0] - fd) <= 1e-5 * std::fabs(fd));
  REQUIRE_FALSE(grid.grad_log_value(2, std::span<const double>(x, 1), std::span<double>(g, 1)));
}

TEST_CASE("indicator grid neighbor counts and overlap fractions") {
  for (int d : {1, 2}) {
    int K = 5;
    IndicatorGrid grid(d, K, true);
    auto graph = support_graph(grid);
    int expected = 1;
    for (int k = 0; k < d; ++k) expected *= 3;
    for (int i = 0; i < grid.size(); ++i)
      REQUIRE(static_cast<int>(graph.neighbors[i].size()) == expected);

    // minimum fractional overlap between adjacent supports is 1/2^d
    double min_frac = 1.0;
    for (int i = 0; i < grid.size(); ++i) {
      auto bi = grid.support(i);
      double vol_i = 1.0;
      for (auto& ax : bi.axes) vol_i *= ax.length();
      for (int j : graph.neighbors[i]) {
        if (j == i) continue;
        auto bj = grid.support(j);
        double inter = 1.0;
        for (int k = 0; k < d; ++k) {
          double w = 0.0;
          for (int m = -1; m <= 1; ++m) {
            double lo = std::max(bi.axes[k].lo, bj.axes[k].lo + m * 1.0);
            double hi = std::min(bi.axes[k].hi, bj.axes[k].hi + m * 1.0);
            w = std::max(w, hi - lo);
          }
          inter *= w;
        }
        min_frac = std::min(min_frac, inter / vol_i);
      }
    }
    REQUIRE(std::fabs(min_frac - std::pow(0.5, d)) <= 1e-12);
  }
}

TEST_CASE("support-overlap irreducibility") {
  SECTION("disjoint supports are reducible") {
    // two indicator strata with a gap: encode as a subset of a wider family
    BilinearGrid grid({0.0}, {10.0}, {11});
    SubsetBias pair(std::make_shared<BilinearGrid>(grid), {0, 5});
    auto rep = check_irreducibility(pair);
    REQUIRE_FALSE(rep.irreducible);
    REQUIRE(rep.witness == std::vector<int>{0});
  }
  SECTION("tail family overlaps form a chain") {
    TailFamily fam(2.0, 2);
    auto rep = check_irreducibility(fam);
    REQUIRE(rep.irreducible);
  }
}

TEST_CASE("sample-based irreducibility is the directed criterion") {
  TailFamily fam(3.0, 3);  // strata 0..4, supports [0,1),[0,2),[1,3),[2,inf),[3,inf)
  SubsetBias three(std::make_shared<TailFamily>(fam), {0, 1, 2});

  SECTION("one-way reachability is a reducible witness, a cycle is not") {
    // supports: psi_0 = [0,1), psi_1 = [0,2), psi_2 = [1,3)
    std::vector<std::vector<std::vector<double>>> samples{
        {{0.5}},   // stratum 0 touches supports {0,1}
        {{1.5}},   // stratum 1 touches supports {1,2}
        {{1.2}}};  // stratum 2 touches supports {1,2}: nothing reaches 0
    auto rep = check_irreducibility(three, samples);
    REQUIRE_FALSE(rep.irreducible);
    REQUIRE(rep.witness == std::vector<int>{0});

    samples[2] = {{0.5}};  // stratum 2 now reaches support 0: cycle closes
    rep = check_irreducibility(three, samples);
    REQUIRE(rep.irreducible);
  }
  SECTION("empty sample set is rejected") {
    std::vector<std::vector<std::vector<double>>> samples{{{0.5}}, {}, {{1.5}}};
    REQUIRE_THROWS_AS(check_irreducibility(three, samples), std::invalid_argument);
  }
}

TEST_CASE("sample-based and support criteria agree with full-support samples") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    int K = 2 + static_cast<int>(unif(rng) * 4);
    auto grid = std::make_shared<BilinearGrid>(std::vector<double>{0.0},
                                               std::vector<double>{1.0}, std::vector<int>{K + 1});
    // random subset, always keeping stratum 0
    std::vector<int> keep{0};
    for (int i = 1; i <= K; ++i)
      if (unif(rng) < 0.7) keep.push_back(i);
    SubsetBias sub(grid, keep);

    auto no_samples = check_irreducibility(sub);

    // saturate every stratum's support with points
    std::vector<std::vector<std::vector<double>>> samples(sub.size());
    for (int i = 0; i < sub.size(); ++i) {
      auto box = sub.support(i);
      for (int t = 0; t < 50; ++t) {
        double x = box.axes[0].lo + (box.axes[0].hi - box.axes[0].lo) * (t + 0.5) / 50.0;
        x = std::clamp(x, 0.0, 1.0);
        if (sub.value(i, std::span<const double>(&x, 1)) > 0.0)
          samples[i].push_back({x});
      }
      if (samples[i].empty()) {
        auto multi_mid = 0.5 * (box.axes[0].lo + box.axes[0].hi);
        samples[i].push_back({multi_mid});
      }
    }
    auto with_samples = check_irreducibility(sub, samples);
    REQUIRE(no_samples.irreducible == with_samples.irreducible);
  }
}

TEST_CASE("composition with a collective variable") {
  auto grid = std::make_shared<BilinearGrid>(std::vector<double>{-1.0, -1.0},
                                             std::vector<double>{3.2, 3.2},
                                             std::vector<int>{50, 50});
  SECTION("identity leaves evaluation unchanged") {
    ComposedBias composed(grid, identity_cv(2));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(-1.0, 3.2);
    for (int t = 0; t < 100; ++t) {
      double x[2] = {unif(rng), unif(rng)};
      SparsePsi a, b;
      composed.evaluate_nonzero(std::span<const double>(x, 2), a);
      grid->evaluate_nonzero(std::span<const double>(x, 2), b);
      REQUIRE(a == b);
    }
  }
  SECTION("projection picks grid coordinates from a larger state") {
    ComposedBias composed(grid, coordinate_cv(5, {1, 3}));
    double x[5] = {99.0, 0.5, -42.0, 1.5, 7.0};
    double theta[2] = {0.5, 1.5};
    auto a = composed.evaluate(std::span<const double>(x, 5));
    auto b = grid->evaluate(std::span<const double>(theta, 2));
    REQUIRE(a == b);
  }
  SECTION("constant map supports exactly one cell's members everywhere") {
    CollectiveVariable constant{"const", 3, 2,
                                [](std::span<const double>, std::span<double> out) {
                                  out[0] = 0.05;
                                  out[1] = 0.05;
                                }};
    register_cv(constant);
    ComposedBias composed(grid, constant);
    SparsePsi nz;
    double x[3] = {1.0, 2.0, 3.0};
    composed.evaluate_nonzero(std::span<const double>(x, 3), nz);
    double y[3] = {-5.0, 0.0, 12.0};
    SparsePsi nz2;
    composed.evaluate_nonzero(std::span<const double>(y, 3), nz2);
    REQUIRE(nz == nz2);
    REQUIRE_FALSE(nz.empty());
  }
}

TEST_CASE("bias descriptors round-trip through JSON") {
  std::vector<std::shared_ptr<BiasSet>> families{
      std::make_shared<IndicatorGrid>(2, 4, true),
      std::make_shared<IndicatorGrid>(1, 7, false, std::vector<double>{-4.0},
                                      std::vector<double>{4.0}),
      std::make_shared<TailFamily>(20.0, 20),
      std::make_shared<BilinearGrid>(std::vector<double>{-1.0}, std::vector<double>{3.2},
                                     std::vector<int>{50}),
  };
  families.push_back(std::make_shared<ComposedBias>(
      std::make_shared<BilinearGrid>(std::vector<double>{-1.0, -1.0},
                                     std::vector<double>{3.2, 3.2}, std::vector<int>{10, 10}),
      scaled_coordinate_cv(6, {3, 4}, 1.0 / std::log(10.0))));
  families.push_back(std::make_shared<SubsetBias>(
      std::make_shared<TailFamily>(5.0, 5), std::vector<int>{0, 1, 2, 3}));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& fam : families) {
    auto reconstructed = bias_from_json(bias_to_json(*fam));
    REQUIRE(reconstructed->size() == fam->size());
    REQUIRE(reconstructed->dim() == fam->dim());
    REQUIRE(reconstructed->partition_of_unity() == fam->partition_of_unity());
    for (int t = 0; t < 50; ++t) {
      std::vector<double> x(fam->dim());
      for (auto& v : x) v = unif(rng);  // inside every family's domain here
      if (!fam->in_domain(x)) continue;
      REQUIRE(fam->evaluate(x) == reconstructed->evaluate(x));
    }
  }
}

TEST_CASE("evaluate_nonzero agrees with dense evaluation") {
  auto check = [](const BiasSet& fam, std::span<const double> x) {
    SparsePsi nz;
    fam.evaluate_nonzero(x, nz);
    auto dense = fam.evaluate(x);
    double total = 0.0;
    for (auto& [i, v] : nz) {
      REQUIRE(v > 0.0);
      total += v;
    }
    double dense_total = 0.0;
    for (double v : dense) dense_total += v;
    REQUIRE(std::fabs(total - dense_total) <= 1e-14);
  };
  IndicatorGrid grid(2, 6, true);
  TailFamily tail(8.0, 8);
  BilinearGrid bil({-1.0, -1.0}, {3.2, 3.2}, {13, 13});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    double g2[2] = {unif(rng), unif(rng)};
    check(grid, std::span<const double>(g2, 2));
    double t1[1] = {unif(rng) * 10.0};
    check(tail, std::span<const double>(t1, 1));
    double b2[2] = {-1.0 + 4.2 * unif(rng), -1.0 + 4.2 * unif(rng)};
    check(bil, std::span<const double>(b2, 2));
  }
}
