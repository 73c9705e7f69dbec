#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace emus {

enum class DomainKind { Box, PeriodicBox, HalfLine, Unconstrained };

struct Domain {
  DomainKind kind = DomainKind::Unconstrained;
  int dim = 1;
  std::vector<double> lo, hi;  // Box / PeriodicBox only

  bool contains(std::span<const double> x) const;
  /// Wrap periodic coordinates in place; no-op otherwise.
  void wrap(std::span<double> x) const;

  static Domain box(std::vector<double> lo, std::vector<double> hi);
  static Domain periodic_box(std::vector<double> lo, std::vector<double> hi);
  static Domain half_line();
  static Domain unconstrained(int dim);
};

/// Unnormalized target density in log space, with optional gradient.
struct TargetModel {
  int dim = 1;
  Domain domain;
  std::function<double(std::span<const double>)> log_density;
  std::function<void(std::span<const double>, std::span<double>)> grad_log_density;

  bool has_grad() const { return static_cast<bool>(grad_log_density); }
};

/// pi(x) = exp(-x) on [0, inf).
TargetModel exp_halfline_target();

/// Isotropic Gaussian.
TargetModel gaussian_target(double mean = 0.0, double sd = 1.0, int dim = 1);

/// log pi = -beta * cos(2 pi wells x) on the periodic unit interval.
TargetModel periodic_cosine_target(double beta, int wells = 2);

/// Flat density on a box.
TargetModel flat_target(std::vector<double> lo, std::vector<double> hi);

/// 2D target with two channels in the second coordinate that merge on the
/// left and are separated by a high barrier on the right; the marginal in
/// the first coordinate is standard normal. Used to demonstrate the
/// initialization pathology of one-dimensional stratification.
TargetModel barrier_channels_target();
/// Exact first-coordinate marginal density of barrier_channels_target.
double barrier_channels_marginal(double x);

/// Relative agreement of grad_log_density with central finite differences.
/// Returns the worst relative error over the coordinates.
double gradient_fd_error(const TargetModel& target, std::span<const double> x,
                         double step = 1e-6);

}  // namespace emus
