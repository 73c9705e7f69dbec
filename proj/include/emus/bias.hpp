#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace emus {

/// Half-open axis interval [lo, hi); hi may be +inf.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

/// Axis-aligned box used for support geometry.
struct Box {
  std::vector<Interval> axes;
  int dim() const { return static_cast<int>(axes.size()); }
};

/// True if the boxes intersect with positive volume. For periodic axes the
/// overlap is evaluated on the circle of circumference `period[k]`
/// (period <= 0 means the axis is not periodic).
bool boxes_overlap(const Box& a, const Box& b, std::span<const double> period);

using SparsePsi = std::vector<std::pair<int, double>>;

/// A family of L nonnegative bias functions over a d-dimensional domain.
/// Immutable after construction; safe for concurrent reads.
class BiasSet {
 public:
  virtual ~BiasSet() = default;

  int size() const { return L_; }
  int dim() const { return dim_; }
  bool partition_of_unity() const { return partition_of_unity_; }

  virtual bool in_domain(std::span<const double> x) const = 0;

  /// All L values at x. Throws std::domain_error if x is outside the
  /// declared domain.
  void evaluate(std::span<const double> x, std::span<double> out) const;
  std::vector<double> evaluate(std::span<const double> x) const;

  /// Nonzero entries only; clears and fills `out`. Same domain contract as
  /// evaluate(). Families with local support override this with O(2^d) cost.
  virtual void evaluate_nonzero(std::span<const double> x,
                                SparsePsi& out) const;

  /// Single bias value; returns 0 outside the function's support, including
  /// points outside the declared domain (samplers use this to reject).
  virtual double value(int i, std::span<const double> x) const = 0;

  /// Gradient of log psi_i at x for smooth families. Returns false when the
  /// family is piecewise constant or x is outside the open support.
  virtual bool grad_log_value(int i, std::span<const double> x,
                              std::span<double> out) const;

  /// Support of psi_i as an axis-aligned box (in the collective-variable
  /// space for composed families).
  virtual Box support(int i) const = 0;

  /// Dimension in which supports live (= dim() except for composed sets).
  virtual int support_dim() const { return dim_; }

  /// Per-axis period of the support space; <=0 on non-periodic axes.
  virtual std::vector<double> support_period() const;

  virtual nlohmann::json descriptor() const = 0;

 protected:
  BiasSet(int L, int dim, bool pou) : L_(L), dim_(dim), partition_of_unity_(pou) {}
  int L_;
  int dim_;
  bool partition_of_unity_;
};

/// The trivial family {psi == 1}; used for unstratified runs.
class UniformBias final : public BiasSet {
 public:
  explicit UniformBias(int dim) : BiasSet(1, dim, true) {}
  bool in_domain(std::span<const double>) const override { return true; }
  double value(int, std::span<const double>) const override { return 1.0; }
  Box support(int) const override;
  nlohmann::json descriptor() const override;
};

/// Piecewise-constant partition of unity on a box (or torus): value 1/2^d on
/// the cell [h(i_k-1), h(i_k+1)) per axis, in the coordinates rescaled to the
/// unit cube. Periodic: K^d functions; otherwise (K+1)^d with node indices
/// 0..K per axis.
class IndicatorGrid final : public BiasSet {
 public:
  IndicatorGrid(int dim, int resolution, bool periodic,
                std::vector<double> lo = {}, std::vector<double> hi = {});

  int resolution() const { return K_; }
  bool periodic() const { return periodic_; }
  int cells_per_axis() const { return periodic_ ? K_ : K_ + 1; }

  /// Row-major linearization of the multi-index (periodic wrap applied).
  int linear_index(std::span<const int> multi) const;
  std::vector<int> multi_index(int linear) const;

  bool in_domain(std::span<const double> x) const override;
  void evaluate_nonzero(std::span<const double> x, SparsePsi& out) const override;
  double value(int i, std::span<const double> x) const override;
  Box support(int i) const override;
  std::vector<double> support_period() const override;
  nlohmann::json descriptor() const override;

 private:
  // scaled coordinate of x on axis k, in [0, K]
  double scaled(double x, int k) const;
  int K_;
  bool periodic_;
  std::vector<double> lo_, hi_;
};

/// The K+2 half-overlapping indicator family on [0, inf) used for tail
/// probabilities: psi_0 = 1/2 on [0,h), psi_i = 1/2 on [(i-1)h,(i+1)h) for
/// 1<=i<=K-1, psi_K = 1/2 on [M-h,inf), psi_{K+1} = 1/2 on [M,inf).
class TailFamily final : public BiasSet {
 public:
  TailFamily(double threshold, int resolution);

  double threshold() const { return M_; }
  int resolution() const { return K_; }
  double spacing() const { return h_; }

  bool in_domain(std::span<const double> x) const override;
  void evaluate_nonzero(std::span<const double> x, SparsePsi& out) const override;
  double value(int i, std::span<const double> x) const override;
  Box support(int i) const override;
  nlohmann::json descriptor() const override;

 private:
  double M_;
  int K_;
  double h_;
};

/// Builds a TailFamily with the resolution rule K = M * ceil(max |V'|) over
/// [0, M] (rounded up to an integer when M is not integral).
TailFamily make_tail_family(double threshold,
                            const std::function<double(double)>& potential_derivative);

/// Tensor products of hat functions phi((x - node)/h) with nodes equally
/// spaced on [lo, hi] per axis. Partition of unity on [lo,hi]^l only; the
/// union of supports extends h beyond each edge, so estimates are averages
/// over the correspondingly truncated target.
class BilinearGrid final : public BiasSet {
 public:
  BilinearGrid(std::vector<double> lo, std::vector<double> hi,
               std::vector<int> nodes_per_axis);

  const std::vector<int>& nodes_per_axis() const { return nodes_; }
  double spacing(int axis) const { return h_[axis]; }
  /// Region where the family sums to one.
  Box pou_region() const;
  /// Union of the supports (the implied truncation of the target).
  Box coverage() const;

  int linear_index(std::span<const int> multi) const;
  std::vector<int> multi_index(int linear) const;

  bool in_domain(std::span<const double> x) const override;
  void evaluate_nonzero(std::span<const double> x, SparsePsi& out) const override;
  double value(int i, std::span<const double> x) const override;
  bool grad_log_value(int i, std::span<const double> x,
                      std::span<double> out) const override;
  Box support(int i) const override;
  nlohmann::json descriptor() const override;

 private:
  std::vector<double> lo_, hi_, h_;
  std::vector<int> nodes_;
};

/// Named map from the sampling space to a low-dimensional collective
/// variable. Registered by name so composed families can be serialized.
struct CollectiveVariable {
  std::string name;
  int in_dim = 0;
  int out_dim = 0;
  std::function<void(std::span<const double>, std::span<double>)> map;
};

CollectiveVariable identity_cv(int dim);
CollectiveVariable coordinate_cv(int in_dim, std::vector<int> coords);
CollectiveVariable scaled_coordinate_cv(int in_dim, std::vector<int> coords, double scale);
/// Lookup by serialized name ("identity:d", "coords:d:i,j", or a name
/// registered by register_cv).
CollectiveVariable cv_from_name(const std::string& name);
void register_cv(const CollectiveVariable& cv);

/// psi_i(x) = inner_i(theta(x)).
class ComposedBias final : public BiasSet {
 public:
  ComposedBias(std::shared_ptr<const BiasSet> inner, CollectiveVariable cv);

  const BiasSet& inner() const { return *inner_; }
  const CollectiveVariable& cv() const { return cv_; }

  bool in_domain(std::span<const double> x) const override;
  void evaluate_nonzero(std::span<const double> x, SparsePsi& out) const override;
  double value(int i, std::span<const double> x) const override;
  Box support(int i) const override;
  int support_dim() const override { return inner_->support_dim(); }
  std::vector<double> support_period() const override { return inner_->support_period(); }
  nlohmann::json descriptor() const override;

 private:
  void apply_cv(std::span<const double> x, std::span<double> theta) const;
  std::shared_ptr<const BiasSet> inner_;
  CollectiveVariable cv_;
};

/// Restriction of a family to a subset of its members (dropped strata are
/// removed from the partition sums as well).
class SubsetBias final : public BiasSet {
 public:
  SubsetBias(std::shared_ptr<const BiasSet> inner, std::vector<int> keep);

  const std::vector<int>& kept() const { return keep_; }

  bool in_domain(std::span<const double> x) const override;
  void evaluate_nonzero(std::span<const double> x, SparsePsi& out) const override;
  double value(int i, std::span<const double> x) const override;
  Box support(int i) const override;
  int support_dim() const override { return inner_->support_dim(); }
  std::vector<double> support_period() const override { return inner_->support_period(); }
  nlohmann::json descriptor() const override;

 private:
  std::shared_ptr<const BiasSet> inner_;
  std::vector<int> keep_;
  std::vector<int> inverse_;  // inner index -> subset index or -1
};

/// Undirected graph of positive-volume support overlaps (diagonal true).
struct SupportGraph {
  int L = 0;
  std::vector<std::vector<int>> neighbors;  // sorted, includes self
  bool adjacent(int i, int j) const;
  bool connected() const;
  std::vector<int> component_of(int i) const;
};

SupportGraph support_graph(const BiasSet& bias);

struct IrreducibilityReport {
  bool irreducible = true;
  std::vector<int> witness;  // a subset A no sample from outside reaches
};

/// Support-overlap criterion (no samples): connectivity of the support graph.
IrreducibilityReport check_irreducibility(const BiasSet& bias);

/// Empirical criterion from per-stratum sample sets: for every index subset
/// A, some point sampled in a stratum outside A must land where a member of
/// A is positive. Decided by strong connectivity of the directed graph with
/// an edge j -> i whenever psi_i > 0 at a sample of stratum j.
IrreducibilityReport check_irreducibility(
    const BiasSet& bias, const std::vector<std::vector<std::vector<double>>>& samples);

/// Same criterion applied to a precomputed nonnegative matrix (edge j -> i
/// iff M(j,i) > 0). Used on estimated overlap matrices.
IrreducibilityReport check_irreducibility_matrix(
    const std::function<bool(int, int)>& edge, int L);

/// Strongly connected components in topological order of the condensation
/// (sources first).
std::vector<std::vector<int>> strongly_connected_components(
    const std::function<bool(int, int)>& edge, int L);

std::shared_ptr<BiasSet> bias_from_json(const nlohmann::json& j);
nlohmann::json bias_to_json(const BiasSet& bias);

}  // namespace emus
