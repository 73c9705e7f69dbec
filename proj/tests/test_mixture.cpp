#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "emus/mixture.hpp"

using namespace emus;
using namespace emus::mixture;

namespace {

Dataset tiny_dataset() { return Dataset::from_values({1.0, 2.0, 3.0}); }

MixtureParams params3(std::initializer_list<double> mu, std::initializer_list<double> lambda,
                      std::initializer_list<double> q, double beta) {
  MixtureParams p;
  p.mu = Eigen::Map<const Eigen::VectorXd>(mu.begin(), mu.size());
  p.lambda = Eigen::Map<const Eigen::VectorXd>(lambda.begin(), lambda.size());
  p.q = Eigen::Map<const Eigen::VectorXd>(q.begin(), q.size());
  p.beta = beta;
  return p;
}

}  // namespace

TEST_CASE("dataset summaries") {
  Dataset d = tiny_dataset();
  REQUIRE(d.size() == 3);
  REQUIRE(d.mean == 2.0);
  REQUIRE(d.range == 2.0);
  REQUIRE(d.frequency.at(2.0) == 1);
  REQUIRE_THROWS_AS(Dataset::from_values({}), std::invalid_argument);
  REQUIRE_THROWS_AS(Dataset::from_values({5.0, 5.0}), std::invalid_argument);
}

TEST_CASE("standard hyperparameters follow the data") {
  Dataset d = tiny_dataset();
  auto hp = Hyperparameters::standard(d);
  REQUIRE(hp.m == 2.0);
  REQUIRE(hp.kappa == 1.0);  // 4 / R^2 with R = 2
  REQUIRE(hp.alpha == 2.0);
  REQUIRE(hp.g == 0.2);
  REQUIRE(hp.h == Catch::Approx(100.0 * 0.2 / (2.0 * 4.0)));
}

TEST_CASE("single-component log posterior term by term") {
  // one observation at zero with unit parameters, written out by hand
  Dataset d;
  d.y = {0.0};
  d.mean = 0.0;
  d.range = 1.0;
  d.frequency[0.0] = 1;
  Hyperparameters hp;
  hp.m = 0.0;
  hp.kappa = 1.0;
  hp.alpha = 2.0;
  hp.g = 0.2;
  hp.h = 2.0;

  MixtureParams p;
  p.mu = Eigen::VectorXd::Zero(1);
  p.lambda = Eigen::VectorXd::Ones(1);
  p.q = Eigen::VectorXd(0);
  p.beta = 1.0;

  const int K = 1, n = 1;
  double expected = 0.5 * K * std::log(hp.kappa)            // kappa^{K/2}
                    + hp.h * std::log(hp.g)                 // g^h
                    + (K * hp.alpha + hp.g - 1.0) * 0.0     // beta^{K alpha + g - 1}, beta = 1
                    - K * std::lgamma(hp.alpha)             // Gamma(alpha)^K
                    - std::lgamma(hp.g)                     // Gamma(g)
                    - 0.5 * (n + K) * std::log(2.0 * M_PI)  // (2 pi)^{(n+K)/2}
                    + (hp.alpha - 1.0) * 0.0                // lambda^{alpha-1}, lambda = 1
                    - 0.5 * hp.kappa * 0.0                  // mean prior at its center
                    - p.beta * (hp.h + 1.0)                 // rate prior and precision sum
                    + std::log(1.0 * 1.0) - 0.5 * 1.0 * 0.0;  // likelihood of y = mu
  auto ld = log_posterior(p, d, hp, 1);
  REQUIRE(ld.flag == ParamFlag::Ok);
  REQUIRE(ld.value == Catch::Approx(expected).epsilon(1e-14));
}

TEST_CASE("translation equivariance of the posterior") {
  Dataset d = Dataset::from_values({0.4, 1.1, 2.7, 3.3, 1.8});
  auto hp = Hyperparameters::standard(d);
  MixtureParams p = params3({0.8, 1.9, 3.0}, {1.3, 0.7, 2.1}, {0.3, 0.4}, 0.9);
  double base = log_posterior(p, d, hp, 3).value;

  double shift = 11.5;
  std::vector<double> shifted(d.y);
  for (auto& v : shifted) v += shift;
  Dataset d2 = Dataset::from_values(std::move(shifted));
  auto hp2 = Hyperparameters::standard(d2);
  MixtureParams p2 = p;
  p2.mu.array() += shift;
  double moved = log_posterior(p2, d2, hp2, 3).value;
  REQUIRE(moved == Catch::Approx(base).margin(1e-9));
}

TEST_CASE("invalid parameters yield flagged minus infinity") {
  Dataset d = tiny_dataset();
  auto hp = Hyperparameters::standard(d);
  auto check = [&](const MixtureParams& p, ParamFlag flag) {
    auto ld = log_posterior(p, d, hp, 3);
    REQUIRE(std::isinf(ld.value));
    REQUIRE(ld.value < 0.0);
    REQUIRE(ld.flag == flag);
  };
  check(params3({2.0, 1.0, 3.0}, {1.0, 1.0, 1.0}, {0.3, 0.3}, 1.0),
        ParamFlag::OrderingViolated);
  check(params3({1.0, 2.0, 3.0}, {1.0, -0.5, 1.0}, {0.3, 0.3}, 1.0),
        ParamFlag::NonpositivePrecision);
  check(params3({1.0, 2.0, 3.0}, {1.0, 0.5, 1.0}, {0.3, 0.3}, -2.0),
        ParamFlag::NonpositiveBeta);
  check(params3({1.0, 2.0, 3.0}, {1.0, 0.5, 1.0}, {0.8, 0.4}, 1.0),
        ParamFlag::WeightsOutsideSimplex);
}

TEST_CASE("permutation symmetry without the ordering constraint") {
  Dataset d = Dataset::from_values({0.4, 1.1, 2.7, 3.3, 1.8});
  auto hp = Hyperparameters::standard(d);
  MixtureParams p = params3({0.8, 1.9, 3.0}, {1.3, 0.7, 2.1}, {0.3, 0.4}, 0.9);
  // swap components 0 and 2: weights (0.3, 0.4, 0.3) -> (0.3, 0.4, 0.3)
  MixtureParams swapped = params3({3.0, 1.9, 0.8}, {2.1, 0.7, 1.3}, {0.3, 0.4}, 0.9);
  double a = log_posterior(p, d, hp, 3, false).value;
  double b = log_posterior(swapped, d, hp, 3, false).value;
  REQUIRE(a == Catch::Approx(b).epsilon(1e-13));
  // the constrained density keeps exactly the sorted representative
  REQUIRE(std::isinf(log_posterior(swapped, d, hp, 3).value));
  REQUIRE(log_posterior(p, d, hp, 3).value == Catch::Approx(a).epsilon(1e-13));
}

TEST_CASE("truncation by the bias family") {
  Dataset d = Dataset::from_values({0.4, 1.1, 2.7, 3.3, 1.8});
  auto hp = Hyperparameters::standard(d);
  BilinearGrid grid({-1.0, -1.0}, {3.2, 3.2}, {50, 50});
  double h = grid.spacing(0);

  SECTION("interior point is unchanged") {
    MixtureParams p = params3({0.8, 1.9, 3.0}, {1.3, 0.7, 2.1}, {0.3, 0.4}, 0.9);
    auto plain = log_posterior(p, d, hp, 3);
    auto trunc = truncated_log_posterior(p, d, hp, 3, grid);
    REQUIRE(trunc.value == Catch::Approx(plain.value).epsilon(1e-13));
  }
  SECTION("outside the covered region the density vanishes") {
    MixtureParams p = params3({0.8, 1.9, 3.0}, {1e5, 0.7, 2.1}, {0.3, 0.4}, 0.9);
    auto trunc = truncated_log_posterior(p, d, hp, 3, grid);
    REQUIRE(std::isinf(trunc.value));
  }
  SECTION("edge cells carry the partial partition sum") {
    // log10 lambda_1 half a spacing outside the grid: sum psi = 1/2
    double l1 = std::pow(10.0, -1.0 - 0.5 * h);
    MixtureParams p = params3({0.8, 1.9, 3.0}, {l1, 0.7, 2.1}, {0.3, 0.4}, 0.9);
    auto plain = log_posterior(p, d, hp, 3);
    auto trunc = truncated_log_posterior(p, d, hp, 3, grid);
    REQUIRE(trunc.value == Catch::Approx(plain.value + std::log(0.5)).epsilon(1e-12));
  }
}

TEST_CASE("unboundedness detector follows the frequency threshold") {
  // threshold for K = 3, g = 0.2, alpha = 2 is 8.4
  std::vector<double> base{60.1, 61.7, 74.2, 88.8, 95.5, 103.2, 119.9, 126.4};
  SECTION("nine repeats trip the detector") {
    std::vector<double> values = base;
    values.insert(values.end(), 9, 77.7);
    auto rep = unboundedness_check(Dataset::from_values(std::move(values)), 3, 0.2, 2.0);
    REQUIRE(rep.threshold == Catch::Approx(8.4));
    REQUIRE(rep.unbounded);
    REQUIRE(rep.datum == 77.7);
    REQUIRE(rep.frequency == 9);
  }
  SECTION("eight repeats stay below it") {
    std::vector<double> values = base;
    values.insert(values.end(), 8, 77.7);
    auto rep = unboundedness_check(Dataset::from_values(std::move(values)), 3, 0.2, 2.0);
    REQUIRE_FALSE(rep.unbounded);
  }
  SECTION("distinct data are bounded") {
    auto rep = unboundedness_check(Dataset::from_values(base), 3, 0.2, 2.0);
    REQUIRE_FALSE(rep.unbounded);
  }
}

TEST_CASE("the collapsing-component escape route is monotone") {
  // a datum above the threshold: the density grows without bound along
  // lambda_1 -> inf with beta = 1/lambda_1 and mu_1 pinned on the datum
  std::vector<double> values{60.1, 61.7, 74.2, 88.8, 95.5, 103.2, 119.9, 126.4};
  values.insert(values.end(), 9, 77.7);
  Dataset d = Dataset::from_values(std::move(values));
  auto hp = Hyperparameters::standard(d);
  REQUIRE(unboundedness_check(d, 3, hp.g, hp.alpha).unbounded);

  double prev = -std::numeric_limits<double>::infinity();
  for (double lambda1 : {1e2, 1e4, 1e6}) {
    MixtureParams p = params3({77.7, 90.0, 110.0}, {lambda1, 0.01, 0.01}, {0.4, 0.3},
                              1.0 / lambda1);
    auto ld = log_posterior(p, d, hp, 3);
    REQUIRE(ld.flag == ParamFlag::Ok);
    REQUIRE(ld.value > prev);
    prev = ld.value;
  }
}

TEST_CASE("csv ingestion") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "emus_mixture_test";
  fs::create_directories(dir);

  SECTION("numeric column") {
    auto path = dir / "ok.csv";
    std::ofstream(path) << "1\n2\n3\n";
    Dataset d = ingest_csv(path);
    REQUIRE(d.size() == 3);
    REQUIRE(d.mean == 2.0);
    REQUIRE(d.range == 2.0);
  }
  SECTION("empty file is an error") {
    auto path = dir / "empty.csv";
    std::ofstream(path) << "";
    REQUIRE_THROWS_AS(ingest_csv(path), std::runtime_error);
  }
  SECTION("non-numeric row reports its line") {
    auto path = dir / "bad.csv";
    std::ofstream(path) << "1.5\n2.5\noops\n4.5\n";
    REQUIRE_THROWS_WITH(ingest_csv(path), Catch::Matchers::ContainsSubstring("line 3"));
  }
  SECTION("thickness-style file in micrometers") {
    auto path = dir / "thickness.csv";
    {
      std::ofstream os(path);
      for (int i = 0; i < 485; ++i) os << 60.0 + (i * 70.0) / 484.0 << '\n';
    }
    Dataset d = ingest_csv(path);
    REQUIRE(d.size() == 485);
    double lo = *std::min_element(d.y.begin(), d.y.end());
    double hi = *std::max_element(d.y.begin(), d.y.end());
    REQUIRE(lo >= 60.0);
    REQUIRE(hi <= 130.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("packed parameterization round-trips") {
  MixtureParams p = params3({0.8, 1.9, 3.0}, {1.3, 0.7, 2.1}, {0.3, 0.4}, 0.9);
  auto phi = pack(p);
  REQUIRE(static_cast<int>(phi.size()) == packed_dim(3));
  auto q = unpack(phi, 3);
  REQUIRE((q.mu - p.mu).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((q.lambda - p.lambda).cwiseAbs().maxCoeff() <= 1e-15);
  REQUIRE(q.beta == Catch::Approx(p.beta).epsilon(1e-15));

  auto j = p.to_json();
  auto r = MixtureParams::from_json(j);
  REQUIRE((r.mu - p.mu).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(r.beta == p.beta);
}

TEST_CASE("posterior target in sampler coordinates") {
  Dataset d = Dataset::from_values(
      sample_mixture_data(120, std::vector<double>{-3.0, 0.0, 4.0},
                          std::vector<double>{0.5, 1.0, 0.7},
                          std::vector<double>{0.3, 0.4, 0.3}, 5));
  TargetModel t = posterior_target(d, 3);
  auto start = default_start(d, 3);
  REQUIRE(static_cast<int>(start.size()) == t.dim);
  REQUIRE(std::isfinite(t.log_density(start)));

  // log transforms add the Jacobian
  auto hp = Hyperparameters::standard(d);
  MixtureParams p = unpack(start, 3);
  double expect = log_posterior(p, d, hp, 3).value;
  for (int k = 3; k < 6; ++k) expect += start[k];
  expect += start[8];
  REQUIRE(t.log_density(start) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("synthetic data generation is deterministic and well-ranged") {
  std::vector<double> means{-2.0, 1.0, 5.0}, sds{0.3, 0.4, 0.5}, w{0.25, 0.5, 0.25};
  auto a = sample_mixture_data(400, means, sds, w, 11);
  auto b = sample_mixture_data(400, means, sds, w, 11);
  REQUIRE(a == b);
  auto mv_lo = *std::min_element(a.begin(), a.end());
  auto mv_hi = *std::max_element(a.begin(), a.end());
  REQUIRE(mv_lo > -2.0 - 5.0 * 0.3);
  REQUIRE(mv_hi < 5.0 + 5.0 * 0.5);
}
