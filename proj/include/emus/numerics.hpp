#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace emus {

/// Compensated (Kahan) accumulator for long trajectory sums.
class KahanSum {
 public:
  void add(double x) {
    double y = x - comp_;
    double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Stable per-stream seed derivation from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse of the standard normal CDF (Wichura's AS 241, double precision).
double inverse_normal_cdf(double p);

/// Low-discrepancy points in [0,1)^d (additive recurrence on the
/// generalized golden ratio). Deterministic; used for property checks.
class QuasiRandomSeq {
 public:
  explicit QuasiRandomSeq(int dim);
  void next(std::span<double> out);

 private:
  std::vector<double> alpha_;
  std::vector<double> state_;
};

/// Adaptive Simpson quadrature on [a,b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-12, int max_depth = 40);

}  // namespace emus
