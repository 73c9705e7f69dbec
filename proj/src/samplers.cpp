#include "emus/samplers.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "emus/numerics.hpp"

namespace emus {

namespace {

std::string format_state(std::span<const double> x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (k) os << ", ";
    os << x[k];
  }
  os << ')';
  return os.str();
}

double bias_value(const BiasSet* bias, int stratum, std::span<const double> x) {
  return bias ? bias->value(stratum, x) : 1.0;
}

void check_start(const TargetModel& target, const BiasSet* bias, int stratum,
                 std::span<const double> x0) {
  if (static_cast<int>(x0.size()) != target.dim)
    throw std::invalid_argument("sampler: x0 dimension mismatch");
  if (!target.domain.contains(x0))
    throw std::invalid_argument("sampler: x0 outside target domain");
  if (bias_value(bias, stratum, x0) <= 0.0)
    throw std::invalid_argument("sampler: x0 outside stratum support");
  double lp = target.log_density(x0);
  if (!std::isfinite(lp))
    throw std::invalid_argument("sampler: log density not finite at x0 " + format_state(x0));
}

bool keep_state(std::uint64_t t, const ChainConfig& cfg) {
  return t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0;
}

std::size_t retained_count(const ChainConfig& cfg) {
  if (cfg.steps <= cfg.burn_in) return 0;
  return (cfg.steps - cfg.burn_in + cfg.thin - 1) / cfg.thin;
}

// mirror fold into [lo, hi]
double fold(double x, double lo, double hi) {
  double w = hi - lo;
  double p = std::fmod(x - lo, 2.0 * w);
  if (p < 0.0) p += 2.0 * w;
  return lo + (p <= w ? p : 2.0 * w - p);
}

}  // namespace

Trajectory rwm_chain(const TargetModel& target, const BiasSet* bias, int stratum,
                     std::span<const double> x0, const ChainConfig& cfg, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("rwm_chain: step must be positive");
  check_start(target, bias, stratum, x0);
  if (cfg.burn_in >= cfg.steps && cfg.steps > 0)
    throw std::invalid_argument("rwm_chain: burn_in must be smaller than steps");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  int d = target.dim;
  std::vector<double> x(x0.begin(), x0.end()), y(d);
  double lq = target.log_density(x) + std::log(bias_value(bias, stratum, x));

  Trajectory traj(d);
  traj.reserve(retained_count(cfg));
  traj.stratum = stratum;
  traj.info = {.method = "rwm", .step = step, .thin = cfg.thin, .burn_in = cfg.burn_in,
               .seed = cfg.seed};

  std::uint64_t accepted = 0;
  for (std::uint64_t t = 0; t < cfg.steps; ++t) {
    for (int k = 0; k < d; ++k) y[k] = x[k] + step * normal(rng);
    target.domain.wrap(y);
    double u = unif(rng);  // one accept draw per step, taken on every path
    bool ok = target.domain.contains(y);
    double by = ok ? bias_value(bias, stratum, y) : 0.0;
    if (by > 0.0) {
      double lqy = target.log_density(y) + std::log(by);
      if (std::isfinite(lqy) && std::log(u) < lqy - lq) {
        x = y;
        lq = lqy;
        ++accepted;
      }
    }
    if (keep_state(t, cfg)) traj.append(x);
  }
  traj.info.acceptance = cfg.steps ? static_cast<double>(accepted) / cfg.steps : 0.0;
  return traj;
}

Trajectory langevin_chain(const TargetModel& target, const BiasSet* bias, int stratum,
                          std::span<const double> x0, const ChainConfig& cfg, double dt,
                          bool reflected) {
  if (!(dt > 0.0)) throw std::invalid_argument("langevin_chain: dt must be positive");
  if (!target.has_grad()) throw std::invalid_argument("langevin_chain: gradient required");
  check_start(target, bias, stratum, x0);

  int d = target.dim;
  Box box;
  if (reflected) {
    if (bias) {
      if (bias->support_dim() != d)
        throw std::invalid_argument("langevin_chain: reflected needs a box support in state space");
      box = bias->support(stratum);
    } else if (target.domain.kind == DomainKind::Box) {
      box.axes.resize(d);
      for (int k = 0; k < d; ++k) box.axes[k] = {target.domain.lo[k], target.domain.hi[k]};
    } else {
      throw std::invalid_argument("langevin_chain: reflected requires a box support");
    }
    for (auto& ax : box.axes)
      if (!std::isfinite(ax.lo) || !std::isfinite(ax.hi))
        throw std::invalid_argument("langevin_chain: reflected requires a bounded box support");
  }

  // smooth bias -> Metropolis-corrected proposals (the pyramid boundaries
  // would otherwise leak mass); piecewise-constant bias -> plain
  // Euler-Maruyama with the pi drift.
  std::vector<double> gtmp(d);
  bool smooth_bias = bias && bias->grad_log_value(stratum, x0, gtmp);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<double> x(x0.begin(), x0.end()), y(d), drift(d), drift_y(d), noise(d);
  auto compute_drift = [&](std::span<const double> p, std::span<double> out) {
    target.grad_log_density(p, out);
    if (smooth_bias) {
      if (!bias->grad_log_value(stratum, p, gtmp)) return false;
      for (int k = 0; k < d; ++k) out[k] += gtmp[k];
    }
    for (int k = 0; k < d; ++k)
      if (!std::isfinite(out[k]))
        throw std::runtime_error("langevin_chain: drift not finite at state " + format_state(p));
    return true;
  };

  Trajectory traj(d);
  traj.reserve(retained_count(cfg));
  traj.stratum = stratum;
  traj.info = {.method = reflected ? "langevin_reflected" : (smooth_bias ? "mala" : "langevin"),
               .dt = dt, .thin = cfg.thin, .burn_in = cfg.burn_in, .seed = cfg.seed};

  const double sq = std::sqrt(2.0 * dt);
  compute_drift(x, drift);
  double lq = target.log_density(x) +
              (smooth_bias ? std::log(bias_value(bias, stratum, x)) : 0.0);
  std::uint64_t accepted = 0;
  for (std::uint64_t t = 0; t < cfg.steps; ++t) {
    for (int k = 0; k < d; ++k) {
      noise[k] = normal(rng);
      y[k] = x[k] + dt * drift[k] + sq * noise[k];
    }
    if (reflected) {
      for (int k = 0; k < d; ++k) y[k] = fold(y[k], box.axes[k].lo, box.axes[k].hi);
      x = y;
      compute_drift(x, drift);
      ++accepted;
    } else if (smooth_bias) {
      // MALA accept/reject
      double u = unif(rng);
      double by = target.domain.contains(y) ? bias_value(bias, stratum, y) : 0.0;
      bool take = false;
      if (by > 0.0) {
        double lqy = target.log_density(y) + std::log(by);
        if (std::isfinite(lqy) && compute_drift(y, drift_y)) {
          double fwd = 0.0, bwd = 0.0;
          for (int k = 0; k < d; ++k) {
            double df = y[k] - x[k] - dt * drift[k];
            double db = x[k] - y[k] - dt * drift_y[k];
            fwd += df * df;
            bwd += db * db;
          }
          double log_alpha = lqy - lq + (fwd - bwd) / (4.0 * dt);
          take = std::log(u) < log_alpha;
          if (take) {
            x = y;
            lq = lqy;
            drift = drift_y;
          }
        }
      }
      accepted += take;
    } else {
      // plain EM; leaving the support or the domain rejects the move
      target.domain.wrap(y);
      if (target.domain.contains(y) && bias_value(bias, stratum, y) > 0.0) {
        x = y;
        compute_drift(x, drift);
        ++accepted;
      }
    }
    if (keep_state(t, cfg)) traj.append(x);
  }
  traj.info.acceptance = cfg.steps ? static_cast<double>(accepted) / cfg.steps : 1.0;
  return traj;
}

Trajectory ensemble_chain(const TargetModel& target, const BiasSet* bias, int stratum,
                          const std::vector<std::vector<double>>& walker_starts,
                          const ChainConfig& cfg, double stretch) {
  int W = static_cast<int>(walker_starts.size());
  if (W < 2) throw std::invalid_argument("ensemble_chain: need at least two walkers");
  if (!(stretch > 1.0)) throw std::invalid_argument("ensemble_chain: stretch must exceed 1");
  int d = target.dim;
  bool all_same = true;
  for (const auto& w : walker_starts) {
    check_start(target, bias, stratum, w);
    all_same = all_same && w == walker_starts.front();
  }
  if (all_same) throw std::invalid_argument("ensemble_chain: degenerate ensemble (identical walkers)");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<std::vector<double>> xs = walker_starts;
  std::vector<double> lq(W), y(d);
  for (int w = 0; w < W; ++w)
    lq[w] = target.log_density(xs[w]) + std::log(bias_value(bias, stratum, xs[w]));

  Trajectory traj(d);
  traj.reserve(retained_count(cfg) * W);
  traj.stratum = stratum;
  traj.info = {.method = "ensemble", .walkers = W, .stretch = stretch, .thin = cfg.thin,
               .burn_in = cfg.burn_in, .seed = cfg.seed};

  std::uint64_t accepted = 0, proposals = 0;
  for (std::uint64_t t = 0; t < cfg.steps; ++t) {
    for (int w = 0; w < W; ++w) {
      int other = static_cast<int>(unif(rng) * (W - 1));
      if (other >= w) ++other;
      double u = unif(rng);
      double z = (stretch - 1.0) * u + 1.0;
      z = z * z / stretch;
      for (int k = 0; k < d; ++k) y[k] = xs[other][k] + z * (xs[w][k] - xs[other][k]);
      target.domain.wrap(y);
      ++proposals;
      double ua = unif(rng);
      double by = target.domain.contains(y) ? bias_value(bias, stratum, y) : 0.0;
      bool take = false;
      if (by > 0.0) {
        double lqy = target.log_density(y) + std::log(by);
        if (std::isfinite(lqy)) {
          double log_alpha = (d - 1) * std::log(z) + lqy - lq[w];
          take = std::log(ua) < log_alpha;
          if (take) {
            xs[w].assign(y.begin(), y.end());
            lq[w] = lqy;
          }
        }
      }
      accepted += take;
    }
    if (keep_state(t, cfg))
      for (int w = 0; w < W; ++w) traj.append(xs[w]);
  }
  traj.info.acceptance = proposals ? static_cast<double>(accepted) / proposals : 0.0;
  return traj;
}

Trajectory iid_chain(const AnalyticForm1D& form, Interval support, std::uint64_t n,
                     std::uint64_t seed) {
  if (!(support.hi > support.lo)) throw std::invalid_argument("iid_chain: empty support");
  if (form.c2 < 0.0)
    throw std::invalid_argument("iid_chain: unsupported analytic form (c2 < 0)");
  bool unbounded = std::isinf(support.hi);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Trajectory traj(1);
  traj.reserve(n);
  traj.info = {.method = "iid", .seed = seed};
  double x;

  if (form.c2 == 0.0) {
    double b = form.c1;
    if (b == 0.0) {
      if (unbounded) throw std::invalid_argument("iid_chain: flat density on unbounded support");
      for (std::uint64_t t = 0; t < n; ++t) {
        x = support.lo + (support.hi - support.lo) * unif(rng);
        traj.append({&x, 1});
      }
    } else {
      if (unbounded && b < 0.0)
        throw std::invalid_argument("iid_chain: non-normalizable exponential form");
      double scale = unbounded ? 1.0 : 1.0 - std::exp(-b * (support.hi - support.lo));
      for (std::uint64_t t = 0; t < n; ++t) {
        double u = unif(rng);
        x = support.lo - std::log1p(-u * scale) / b;
        traj.append({&x, 1});
      }
    }
  } else {
    double sigma = 1.0 / std::sqrt(2.0 * form.c2);
    double mu = -form.c1 / (2.0 * form.c2);
    double Fa = normal_cdf((support.lo - mu) / sigma);
    double Fb = unbounded ? 1.0 : normal_cdf((support.hi - mu) / sigma);
    if (!(Fb > Fa))
      throw std::invalid_argument("iid_chain: support mass vanishes in double precision");
    for (std::uint64_t t = 0; t < n; ++t) {
      double u = Fa + (Fb - Fa) * unif(rng);
      x = mu + sigma * inverse_normal_cdf(u);
      x = std::min(std::max(x, support.lo), std::isinf(support.hi) ? x : support.hi);
      traj.append({&x, 1});
    }
  }
  return traj;
}

Trajectory iid_stratum_chain(const AnalyticForm1D& form, const BiasSet& bias, int stratum,
                             std::uint64_t n, std::uint64_t seed) {
  if (bias.support_dim() != 1)
    throw std::invalid_argument("iid_stratum_chain: 1D bias families only");
  Box b = bias.support(stratum);
  Trajectory traj = iid_chain(form, b.axes[0], n, seed);
  traj.stratum = stratum;
  return traj;
}

}  // namespace emus
