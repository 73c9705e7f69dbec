#include "emus/target.hpp"

#include <cmath>
#include <stdexcept>

namespace emus {

bool Domain::contains(std::span<const double> x) const {
  switch (kind) {
    case DomainKind::Box:
      for (int k = 0; k < dim; ++k)
        if (x[k] < lo[k] || x[k] > hi[k]) return false;
      return true;
    case DomainKind::PeriodicBox:
      return true;
    case DomainKind::HalfLine:
      return x[0] >= 0.0;
    case DomainKind::Unconstrained:
      return true;
  }
  return false;
}

void Domain::wrap(std::span<double> x) const {
  if (kind != DomainKind::PeriodicBox) return;
  for (int k = 0; k < dim; ++k) {
    double w = hi[k] - lo[k];
    double t = std::fmod(x[k] - lo[k], w);
    if (t < 0.0) t += w;
    x[k] = lo[k] + t;
  }
}

Domain Domain::box(std::vector<double> lo, std::vector<double> hi) {
  Domain d;
  d.kind = DomainKind::Box;
  d.dim = static_cast<int>(lo.size());
  d.lo = std::move(lo);
  d.hi = std::move(hi);
  return d;
}

Domain Domain::periodic_box(std::vector<double> lo, std::vector<double> hi) {
  Domain d = box(std::move(lo), std::move(hi));
  d.kind = DomainKind::PeriodicBox;
  return d;
}

Domain Domain::half_line() {
  Domain d;
  d.kind = DomainKind::HalfLine;
  d.dim = 1;
  return d;
}

Domain Domain::unconstrained(int dim) {
  Domain d;
  d.kind = DomainKind::Unconstrained;
  d.dim = dim;
  return d;
}

TargetModel exp_halfline_target() {
  TargetModel t;
  t.dim = 1;
  t.domain = Domain::half_line();
  t.log_density = [](std::span<const double> x) { return -x[0]; };
  t.grad_log_density = [](std::span<const double>, std::span<double> g) { g[0] = -1.0; };
  return t;
}

TargetModel gaussian_target(double mean, double sd, int dim) {
  TargetModel t;
  t.dim = dim;
  t.domain = Domain::unconstrained(dim);
  double inv_var = 1.0 / (sd * sd);
  t.log_density = [mean, inv_var, dim](std::span<const double> x) {
    double s = 0.0;
    for (int k = 0; k < dim; ++k) {
      double d = x[k] - mean;
      s += d * d;
    }
    return -0.5 * inv_var * s;
  };
  t.grad_log_density = [mean, inv_var, dim](std::span<const double> x, std::span<double> g) {
    for (int k = 0; k < dim; ++k) g[k] = -inv_var * (x[k] - mean);
  };
  return t;
}

TargetModel periodic_cosine_target(double beta, int wells) {
  TargetModel t;
  t.dim = 1;
  t.domain = Domain::periodic_box({0.0}, {1.0});
  double omega = 2.0 * M_PI * wells;
  t.log_density = [beta, omega](std::span<const double> x) {
    return -beta * std::cos(omega * x[0]);
  };
  t.grad_log_density = [beta, omega](std::span<const double> x, std::span<double> g) {
    g[0] = beta * omega * std::sin(omega * x[0]);
  };
  return t;
}

TargetModel flat_target(std::vector<double> lo, std::vector<double> hi) {
  TargetModel t;
  t.dim = static_cast<int>(lo.size());
  t.domain = Domain::box(std::move(lo), std::move(hi));
  t.log_density = [](std::span<const double>) { return 0.0; };
  t.grad_log_density = [dim = t.dim](std::span<const double>, std::span<double> g) {
    for (int k = 0; k < dim; ++k) g[k] = 0.0;
  };
  return t;
}

namespace {
// channel geometry for the initialization-pathology demo
constexpr double kChanS = 0.3;      // channel width
constexpr double kChanMMax = 2.5;   // asymptotic half-separation
double chan_m(double x) { return kChanMMax / (1.0 + std::exp(-4.0 * x)); }
double chan_wu(double x) { return 0.5 + 0.45 * std::tanh(1.5 * (x - 1.0)); }
}  // namespace

TargetModel barrier_channels_target() {
  TargetModel t;
  t.dim = 2;
  t.domain = Domain::unconstrained(2);
  t.log_density = [](std::span<const double> p) {
    double x = p[0], y = p[1];
    double m = chan_m(x), wu = chan_wu(x);
    double inv2s2 = 0.5 / (kChanS * kChanS);
    double au = -(y - m) * (y - m) * inv2s2;
    double ad = -(y + m) * (y + m) * inv2s2;
    double hi = std::max(au, ad);
    double mix = hi + std::log(wu * std::exp(au - hi) + (1.0 - wu) * std::exp(ad - hi));
    return -0.5 * x * x + mix;
  };
  return t;
}

double barrier_channels_marginal(double x) {
  // the channel mixture integrates to one at every x
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

double gradient_fd_error(const TargetModel& target, std::span<const double> x, double step) {
  if (!target.has_grad()) throw std::invalid_argument("gradient_fd_error: no gradient");
  std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end()), g(target.dim);
  target.grad_log_density(x, g);
  double worst = 0.0;
  for (int k = 0; k < target.dim; ++k) {
    xp[k] = x[k] + step;
    xm[k] = x[k] - step;
    double fd = (target.log_density(xp) - target.log_density(xm)) / (2.0 * step);
    double denom = std::max({std::fabs(fd), std::fabs(g[k]), 1e-12});
    worst = std::max(worst, std::fabs(fd - g[k]) / denom);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return worst;
}

}  // namespace emus
