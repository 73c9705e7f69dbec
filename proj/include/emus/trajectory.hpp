#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace emus {

struct SamplerInfo {
  std::string method;
  double step = 0.0;       // rwm proposal scale
  double dt = 0.0;         // langevin time step
  int walkers = 0;         // ensemble only
  double stretch = 0.0;    // ensemble only
  int thin = 1;
  std::uint64_t burn_in = 0;
  std::uint64_t seed = 0;
  double acceptance = 1.0;
};

/// Retained states of one biased process, row-major.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return dim_ ? data_.size() / dim_ : 0; }
  std::span<const double> state(std::size_t t) const {
    return {data_.data() + t * dim_, static_cast<std::size_t>(dim_)};
  }
  void append(std::span<const double> x) { data_.insert(data_.end(), x.begin(), x.end()); }
  void reserve(std::size_t states) { data_.reserve(states * dim_); }
  const std::vector<double>& raw() const { return data_; }

  int stratum = -1;
  SamplerInfo info;

  /// Binary columnar file `<base>.traj` plus JSON sidecar `<base>.traj.json`.
  void save(const std::filesystem::path& base) const;
  static Trajectory load(const std::filesystem::path& base);
  void export_csv(std::ostream& os) const;

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

}  // namespace emus
