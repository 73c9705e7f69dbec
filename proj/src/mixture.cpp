#include "emus/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace emus::mixture {

using nlohmann::json;

json MixtureParams::to_json() const {
  return json{{"mu", std::vector<double>(mu.data(), mu.data() + mu.size())},
              {"lambda", std::vector<double>(lambda.data(), lambda.data() + lambda.size())},
              {"q", std::vector<double>(q.data(), q.data() + q.size())},
              {"beta", beta}};
}

MixtureParams MixtureParams::from_json(const json& j) {
  MixtureParams p;
  auto mu = j.at("mu").get<std::vector<double>>();
  auto lambda = j.at("lambda").get<std::vector<double>>();
  auto q = j.at("q").get<std::vector<double>>();
  p.mu = Eigen::Map<Eigen::VectorXd>(mu.data(), mu.size());
  p.lambda = Eigen::Map<Eigen::VectorXd>(lambda.data(), lambda.size());
  p.q = Eigen::Map<Eigen::VectorXd>(q.data(), q.size());
  p.beta = j.at("beta").get<double>();
  return p;
}

Dataset Dataset::from_values(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("Dataset: no observations");
  Dataset d;
  d.y = std::move(values);
  double lo = d.y[0], hi = d.y[0], sum = 0.0;
  for (double v : d.y) {
    if (!std::isfinite(v)) throw std::invalid_argument("Dataset: non-finite observation");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
    ++d.frequency[v];
  }
  d.mean = sum / d.y.size();
  d.range = hi - lo;
  if (!(d.range > 0.0))
    throw std::invalid_argument("Dataset: observations must not all coincide");
  return d;
}

Dataset ingest_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("ingest_csv: cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    // trim
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;  // blank line
    auto e = line.find_last_not_of(" \t\r");
    std::string tok = line.substr(b, e - b + 1);
    try {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument("trailing characters");
      values.push_back(v);
    } catch (const std::exception&) {
      throw std::runtime_error("ingest_csv: non-numeric row at line " + std::to_string(lineno) +
                               " of " + path.string());
    }
  }
  if (values.empty()) throw std::runtime_error("ingest_csv: no data rows in " + path.string());
  return Dataset::from_values(std::move(values));
}

Hyperparameters Hyperparameters::standard(const Dataset& data) {
  Hyperparameters hp;
  hp.m = data.mean;
  hp.kappa = 4.0 / (data.range * data.range);
  hp.alpha = 2.0;
  hp.g = 0.2;
  hp.h = 100.0 * hp.g / (hp.alpha * data.range * data.range);
  return hp;
}

LogDensity log_posterior(const MixtureParams& params, const Dataset& data,
                         const Hyperparameters& hp, int K, bool enforce_ordering) {
  LogDensity out;
  if (params.components() != K || params.lambda.size() != K || params.q.size() != K - 1)
    throw std::invalid_argument("log_posterior: parameter block sizes do not match K");

  for (int k = 0; k < K; ++k)
    if (!(params.lambda[k] > 0.0)) {
      out.flag = ParamFlag::NonpositivePrecision;
      return out;
    }
  if (!(params.beta > 0.0)) {
    out.flag = ParamFlag::NonpositiveBeta;
    return out;
  }
  double qsum = 0.0;
  for (int k = 0; k < K - 1; ++k) {
    if (params.q[k] < 0.0) {
      out.flag = ParamFlag::WeightsOutsideSimplex;
      return out;
    }
    qsum += params.q[k];
  }
  if (qsum > 1.0) {
    out.flag = ParamFlag::WeightsOutsideSimplex;
    return out;
  }
  if (enforce_ordering)
    for (int k = 0; k + 1 < K; ++k)
      if (params.mu[k] > params.mu[k + 1]) {
        out.flag = ParamFlag::OrderingViolated;
        return out;
      }

  const int n = data.size();
  double lp = 0.5 * K * std::log(hp.kappa) + hp.h * std::log(hp.g) +
              (K * hp.alpha + hp.g - 1.0) * std::log(params.beta) -
              K * std::lgamma(hp.alpha) - std::lgamma(hp.g) -
              0.5 * (n + K) * std::log(2.0 * M_PI);

  double lambda_sum = 0.0;
  for (int k = 0; k < K; ++k) {
    lp += (hp.alpha - 1.0) * std::log(params.lambda[k]);
    double d = params.mu[k] - hp.m;
    lp -= 0.5 * hp.kappa * d * d;
    lambda_sum += params.lambda[k];
  }
  lp -= params.beta * (hp.h + lambda_sum);

  std::vector<double> logw(K);
  for (int k = 0; k < K; ++k) {
    double qk = k < K - 1 ? params.q[k] : 1.0 - qsum;
    logw[k] = qk > 0.0 ? std::log(qk) + 0.5 * std::log(params.lambda[k])
                       : -std::numeric_limits<double>::infinity();
  }
  for (int i = 0; i < n; ++i) {
    double yi = data.y[i];
    double hi = -std::numeric_limits<double>::infinity();
    double term[64];
    double* terms = K <= 64 ? term : nullptr;
    std::vector<double> heap;
    if (!terms) {
      heap.resize(K);
      terms = heap.data();
    }
    for (int k = 0; k < K; ++k) {
      double d = yi - params.mu[k];
      terms[k] = logw[k] - 0.5 * params.lambda[k] * d * d;
      hi = std::max(hi, terms[k]);
    }
    double acc = 0.0;
    for (int k = 0; k < K; ++k) acc += std::exp(terms[k] - hi);
    lp += hi + std::log(acc);
  }
  out.value = lp;
  return out;
}

LogDensity truncated_log_posterior(const MixtureParams& params, const Dataset& data,
                                   const Hyperparameters& hp, int K, const BiasSet& bias) {
  LogDensity base = log_posterior(params, data, hp, K);
  if (!std::isfinite(base.value)) return base;

  std::vector<double> point;
  if (bias.dim() == packed_dim(K)) {
    point = pack(params);
  } else if (bias.dim() == 2) {
    point = {std::log10(params.lambda[0]), std::log10(params.lambda[1])};
  } else {
    throw std::invalid_argument("truncated_log_posterior: bias dimension mismatch");
  }
  LogDensity out;
  if (!bias.in_domain(point)) return out;  // -inf outside the covered region
  SparsePsi nz;
  bias.evaluate_nonzero(point, nz);
  double total = 0.0;
  for (auto& [i, v] : nz) total += v;
  if (!(total > 0.0)) return out;
  out.value = base.value + std::log(total);
  return out;
}

UnboundednessReport unboundedness_check(const Dataset& data, int K, double g, double alpha) {
  UnboundednessReport rep;
  rep.threshold = 2.0 * g + 2.0 * (K - 1) * alpha;
  for (const auto& [value, count] : data.frequency) {
    if (count > rep.threshold && count > rep.frequency) {
      rep.unbounded = true;
      rep.datum = value;
      rep.frequency = count;
    }
  }
  return rep;
}

int packed_dim(int K) { return 3 * K; }

std::vector<double> pack(const MixtureParams& params) {
  const int K = params.components();
  std::vector<double> phi(packed_dim(K));
  for (int k = 0; k < K; ++k) phi[k] = params.mu[k];
  for (int k = 0; k < K; ++k) phi[K + k] = std::log(params.lambda[k]);
  for (int k = 0; k < K - 1; ++k) phi[2 * K + k] = params.q[k];
  phi[3 * K - 1] = std::log(params.beta);
  return phi;
}

MixtureParams unpack(std::span<const double> phi, int K) {
  if (static_cast<int>(phi.size()) != packed_dim(K))
    throw std::invalid_argument("unpack: wrong length");
  MixtureParams p;
  p.mu.resize(K);
  p.lambda.resize(K);
  p.q.resize(K - 1);
  for (int k = 0; k < K; ++k) p.mu[k] = phi[k];
  for (int k = 0; k < K; ++k) p.lambda[k] = std::exp(phi[K + k]);
  for (int k = 0; k < K - 1; ++k) p.q[k] = phi[2 * K + k];
  p.beta = std::exp(phi[3 * K - 1]);
  return p;
}

namespace {
double packed_log_density(std::span<const double> phi, const Dataset& data,
                          const Hyperparameters& hp, int K) {
  MixtureParams p = unpack(phi, K);
  LogDensity ld = log_posterior(p, data, hp, K);
  if (!std::isfinite(ld.value)) return ld.value;
  // Jacobian of the log transforms of the precisions and beta
  double jac = 0.0;
  for (int k = 0; k < K; ++k) jac += phi[K + k];
  jac += phi[3 * K - 1];
  return ld.value + jac;
}
}  // namespace

TargetModel posterior_target(const Dataset& data, int K) {
  TargetModel t;
  t.dim = packed_dim(K);
  t.domain = Domain::unconstrained(t.dim);
  Hyperparameters hp = Hyperparameters::standard(data);
  t.log_density = [data, hp, K](std::span<const double> phi) {
    return packed_log_density(phi, data, hp, K);
  };
  return t;
}

TargetModel truncated_posterior_target(const Dataset& data, int K,
                                       std::shared_ptr<const BiasSet> bias) {
  TargetModel t;
  t.dim = packed_dim(K);
  t.domain = Domain::unconstrained(t.dim);
  Hyperparameters hp = Hyperparameters::standard(data);
  t.log_density = [data, hp, K, bias](std::span<const double> phi) {
    double base = packed_log_density(phi, data, hp, K);
    if (!std::isfinite(base)) return base;
    if (!bias->in_domain(phi)) return -std::numeric_limits<double>::infinity();
    SparsePsi nz;
    bias->evaluate_nonzero(phi, nz);
    double total = 0.0;
    for (auto& [i, v] : nz) total += v;
    if (!(total > 0.0)) return -std::numeric_limits<double>::infinity();
    return base + std::log(total);
  };
  return t;
}

CollectiveVariable log10_precision_cv(int K, int count) {
  std::vector<int> coords(count);
  for (int c = 0; c < count; ++c) coords[c] = K + c;
  return scaled_coordinate_cv(packed_dim(K), coords, 1.0 / std::log(10.0));
}

std::vector<double> sample_mixture_data(int n, std::span<const double> means,
                                        std::span<const double> sds,
                                        std::span<const double> weights, std::uint64_t seed) {
  const int K = static_cast<int>(means.size());
  if (static_cast<int>(sds.size()) != K || static_cast<int>(weights.size()) != K)
    throw std::invalid_argument("sample_mixture_data: component size mismatch");
  std::vector<double> cdf(K);
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    acc += weights[k];
    cdf[k] = acc;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    double u = unif(rng) * acc;
    int k = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    k = std::min(k, K - 1);
    out[i] = means[k] + sds[k] * normal(rng);
  }
  return out;
}

std::vector<double> default_start(const Dataset& data, int K) {
  std::vector<double> sorted = data.y;
  std::sort(sorted.begin(), sorted.end());
  MixtureParams p;
  p.mu.resize(K);
  p.lambda.resize(K);
  p.q.resize(K - 1);
  for (int k = 0; k < K; ++k) {
    double q = (k + 0.5) / K;
    p.mu[k] = sorted[static_cast<std::size_t>(q * (sorted.size() - 1))];
    double width = std::max(data.range / (2.0 * K), 1e-6 * data.range);
    p.lambda[k] = 1.0 / (width * width);
  }
  for (int k = 0; k < K - 1; ++k) p.q[k] = 1.0 / K;
  Hyperparameters hp = Hyperparameters::standard(data);
  p.beta = hp.g / hp.h;
  return pack(p);
}

}  // namespace emus::mixture
