#include "emus/bias.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include <json.hpp>


namespace emus {

using nlohmann::json;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}
}  // namespace

bool boxes_overlap(const Box& a, const Box& b, std::span<const double> period) {
  if (a.dim() != b.dim()) throw std::invalid_argument("boxes_overlap: dim mismatch");
  for (int k = 0; k < a.dim(); ++k) {
    double p = k < static_cast<int>(period.size()) ? period[k] : 0.0;
    // roundoff in box edges must not fabricate hairline overlaps
    double la = a.axes[k].length(), lb = b.axes[k].length();
    double scale = std::isfinite(la) ? (std::isfinite(lb) ? std::min(la, lb) : la)
                                     : (std::isfinite(lb) ? lb : 1.0);
    double tol = 1e-9 * scale;
    bool axis_overlap = false;
    if (p > 0.0) {
      for (int m = -1; m <= 1 && !axis_overlap; ++m) {
        double lo = std::max(a.axes[k].lo, b.axes[k].lo + m * p);
        double hi = std::min(a.axes[k].hi, b.axes[k].hi + m * p);
        axis_overlap = hi - lo > tol;
      }
    } else {
      double lo = std::max(a.axes[k].lo, b.axes[k].lo);
      double hi = std::min(a.axes[k].hi, b.axes[k].hi);
      axis_overlap = hi - lo > tol;
    }
    if (!axis_overlap) return false;
  }
  return true;
}

void BiasSet::evaluate(std::span<const double> x, std::span<double> out) const {
  if (!in_domain(x)) throw std::domain_error("BiasSet::evaluate: point outside domain");
  std::fill(out.begin(), out.end(), 0.0);
  SparsePsi nz;
  evaluate_nonzero(x, nz);
  for (auto& [i, v] : nz) out[i] += v;
}

std::vector<double> BiasSet::evaluate(std::span<const double> x) const {
  std::vector<double> out(L_);
  evaluate(x, out);
  return out;
}

void BiasSet::evaluate_nonzero(std::span<const double> x, SparsePsi& out) const {
  if (!in_domain(x)) throw std::domain_error("BiasSet::evaluate_nonzero: point outside domain");
  out.clear();
  for (int i = 0; i < L_; ++i) {
    double v = value(i, x);
    if (v > 0.0) out.emplace_back(i, v);
  }
}

bool BiasSet::grad_log_value(int, std::span<const double>, std::span<double>) const {
  return false;
}

std::vector<double> BiasSet::support_period() const {
  return std::vector<double>(support_dim(), 0.0);
}

// ---------------------------------------------------------------------------
// UniformBias

Box UniformBias::support(int) const {
  Box b;
  b.axes.assign(dim_, Interval{-kInf, kInf});
  return b;
}

json UniformBias::descriptor() const {
  return json{{"kind", "uniform"}, {"dim", dim_}};
}

// ---------------------------------------------------------------------------
// IndicatorGrid

namespace {
int ipow(int b, int e) {
  int r = 1;
  while (e-- > 0) r *= b;
  return r;
}
}  // namespace

IndicatorGrid::IndicatorGrid(int dim, int resolution, bool periodic,
                             std::vector<double> lo, std::vector<double> hi)
    : BiasSet(ipow(periodic ? resolution : resolution + 1, dim), dim, true),
      K_(resolution),
      periodic_(periodic),
      lo_(std::move(lo)),
      hi_(std::move(hi)) {
  if (dim < 1) throw std::invalid_argument("IndicatorGrid: dim must be >= 1");
  if (resolution < 1) throw std::invalid_argument("IndicatorGrid: resolution must be >= 1");
  if (lo_.empty()) lo_.assign(dim, 0.0);
  if (hi_.empty()) hi_.assign(dim, 1.0);
  if (static_cast<int>(lo_.size()) != dim || static_cast<int>(hi_.size()) != dim)
    throw std::invalid_argument("IndicatorGrid: lo/hi size mismatch");
  for (int k = 0; k < dim; ++k)
    if (!(hi_[k] > lo_[k])) throw std::invalid_argument("IndicatorGrid: hi must exceed lo");
}

double IndicatorGrid::scaled(double x, int k) const {
  double u = (x - lo_[k]) / (hi_[k] - lo_[k]) * K_;
  if (periodic_) {
    u = std::fmod(u, static_cast<double>(K_));
    if (u < 0.0) u += K_;
  }
  return u;
}

int IndicatorGrid::linear_index(std::span<const int> multi) const {
  int n = cells_per_axis();
  int idx = 0;
  for (int k = 0; k < dim_; ++k) {
    int i = multi[k];
    if (periodic_) {
      i %= K_;
      if (i < 0) i += K_;
    } else if (i < 0 || i >= n) {
      throw std::out_of_range("IndicatorGrid::linear_index");
    }
    idx = idx * n + i;
  }
  return idx;
}

std::vector<int> IndicatorGrid::multi_index(int linear) const {
  int n = cells_per_axis();
  std::vector<int> m(dim_);
  for (int k = dim_ - 1; k >= 0; --k) {
    m[k] = linear % n;
    linear /= n;
  }
  return m;
}

bool IndicatorGrid::in_domain(std::span<const double> x) const {
  if (periodic_) return true;
  for (int k = 0; k < dim_; ++k)
    if (x[k] < lo_[k] || x[k] > hi_[k]) return false;
  return true;
}

void IndicatorGrid::evaluate_nonzero(std::span<const double> x, SparsePsi& out) const {
  if (!in_domain(x)) throw std::domain_error("IndicatorGrid: point outside domain");
  out.clear();
  // two active nodes per axis; duplicates under periodic wrap accumulate
  int lo_node[16];
  for (int k = 0; k < dim_; ++k) {
    double u = scaled(x[k], k);
    int i0 = static_cast<int>(std::floor(u));
    if (!periodic_ && i0 >= K_) i0 = K_ - 1;  // top edge closed
    lo_node[k] = i0;
  }
  double val = std::ldexp(1.0, -dim_);  // 1/2^d
  int combos = 1 << dim_;
  int multi[16];
  for (int c = 0; c < combos; ++c) {
    bool ok = true;
    for (int k = 0; k < dim_; ++k) {
      int i = lo_node[k] + ((c >> k) & 1);
      if (!periodic_ && (i < 0 || i > K_)) {
        ok = false;
        break;
      }
      multi[k] = i;
    }
    if (!ok) continue;
    int idx = linear_index(std::span<const int>(multi, dim_));
    bool merged = false;
    for (auto& [j, v] : out)
      if (j == idx) {
        v += val;
        merged = true;
        break;
      }
    if (!merged) out.emplace_back(idx, val);
  }
}

double IndicatorGrid::value(int i, std::span<const double> x) const {
  if (!in_domain(x)) return 0.0;
  auto multi = multi_index(i);
  double val = 1.0;
  for (int k = 0; k < dim_; ++k) {
    double u = scaled(x[k], k);
    double d = u - multi[k];
    int lifts = 0;
    if (periodic_) {
      for (int m = -1; m <= 1; ++m) {
        double t = d + m * K_;
        if (t >= -1.0 && t < 1.0) ++lifts;
      }
    } else {
      bool inside = (d >= -1.0 && d < 1.0) || (d == 1.0 && x[k] == hi_[k]);
      lifts = inside ? 1 : 0;
    }
    if (lifts == 0) return 0.0;
    val *= 0.5 * lifts;
  }
  return val;
}

Box IndicatorGrid::support(int i) const {
  auto multi = multi_index(i);
  Box b;
  b.axes.resize(dim_);
  for (int k = 0; k < dim_; ++k) {
    double h = (hi_[k] - lo_[k]) / K_;
    double center = lo_[k] + h * multi[k];
    b.axes[k] = Interval{center - h, center + h};
  }
  return b;
}

std::vector<double> IndicatorGrid::support_period() const {
  std::vector<double> p(dim_, 0.0);
  if (periodic_)
    for (int k = 0; k < dim_; ++k) p[k] = hi_[k] - lo_[k];
  return p;
}

json IndicatorGrid::descriptor() const {
  return json{{"kind", "indicator_grid"}, {"dim", dim_},      {"resolution", K_},
              {"periodic", periodic_},   {"lo", lo_},         {"hi", hi_}};
}

// ---------------------------------------------------------------------------
// TailFamily

TailFamily::TailFamily(double threshold, int resolution)
    : BiasSet(resolution + 2, 1, true), M_(threshold), K_(resolution), h_(threshold / resolution) {
  if (!(threshold > 0.0)) throw std::invalid_argument("TailFamily: threshold must be positive");
  if (resolution < 1) throw std::invalid_argument("TailFamily: resolution must be >= 1");
}

bool TailFamily::in_domain(std::span<const double> x) const { return x[0] >= 0.0; }

void TailFamily::evaluate_nonzero(std::span<const double> x, SparsePsi& out) const {
  if (!in_domain(x)) throw std::domain_error("TailFamily: point outside [0,inf)");
  out.clear();
  double t = x[0];
  int j0 = static_cast<int>(std::floor(t / h_));
  for (int j : {j0, j0 + 1}) {
    if (j < 0 || j > K_ - 1) continue;
    if (value(j, x) > 0.0) out.emplace_back(j, 0.5);
  }
  if (t >= M_ - h_) out.emplace_back(K_, 0.5);
  if (t >= M_) out.emplace_back(K_ + 1, 0.5);
}

double TailFamily::value(int i, std::span<const double> x) const {
  double t = x[0];
  if (t < 0.0) return 0.0;
  if (i == 0) return t < h_ ? 0.5 : 0.0;
  if (i <= K_ - 1) return (t >= (i - 1) * h_ && t < (i + 1) * h_) ? 0.5 : 0.0;
  if (i == K_) return t >= M_ - h_ ? 0.5 : 0.0;
  if (i == K_ + 1) return t >= M_ ? 0.5 : 0.0;
  throw std::out_of_range("TailFamily::value");
}

Box TailFamily::support(int i) const {
  Box b;
  if (i == 0)
    b.axes = {Interval{0.0, h_}};
  else if (i <= K_ - 1)
    b.axes = {Interval{(i - 1) * h_, (i + 1) * h_}};
  else if (i == K_)
    b.axes = {Interval{M_ - h_, kInf}};
  else if (i == K_ + 1)
    b.axes = {Interval{M_, kInf}};
  else
    throw std::out_of_range("TailFamily::support");
  return b;
}

json TailFamily::descriptor() const {
  return json{{"kind", "tail_family"}, {"threshold", M_}, {"resolution", K_}};
}

TailFamily make_tail_family(double threshold,
                            const std::function<double(double)>& potential_derivative) {
  if (!(threshold > 0.0)) throw std::invalid_argument("make_tail_family: threshold must be positive");
  const int n = 20001;
  double max_ceil = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = threshold * i / (n - 1);
    double d = potential_derivative(x);
    if (!std::isfinite(d))
      throw std::invalid_argument("make_tail_family: potential derivative not finite on [0,M]");
    max_ceil = std::max(max_ceil, std::ceil(std::fabs(d)));
  }
  int K = static_cast<int>(std::ceil(threshold * std::max(max_ceil, 1.0)));
  return TailFamily(threshold, std::max(K, 1));
}

// ---------------------------------------------------------------------------
// BilinearGrid

BilinearGrid::BilinearGrid(std::vector<double> lo, std::vector<double> hi,
                           std::vector<int> nodes_per_axis)
    : BiasSet(1, static_cast<int>(nodes_per_axis.size()), true),
      lo_(std::move(lo)),
      hi_(std::move(hi)),
      nodes_(std::move(nodes_per_axis)) {
  if (nodes_.empty()) throw std::invalid_argument("BilinearGrid: empty axis list");
  if (lo_.size() != nodes_.size() || hi_.size() != nodes_.size())
    throw std::invalid_argument("BilinearGrid: lo/hi size mismatch");
  int L = 1;
  h_.resize(nodes_.size());
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    if (nodes_[k] < 2) throw std::invalid_argument("BilinearGrid: need >= 2 nodes per axis");
    if (!(hi_[k] > lo_[k])) throw std::invalid_argument("BilinearGrid: hi must exceed lo");
    h_[k] = (hi_[k] - lo_[k]) / (nodes_[k] - 1);
    L *= nodes_[k];
  }
  L_ = L;
}

Box BilinearGrid::pou_region() const {
  Box b;
  for (std::size_t k = 0; k < nodes_.size(); ++k) b.axes.push_back({lo_[k], hi_[k]});
  return b;
}

Box BilinearGrid::coverage() const {
  Box b;
  for (std::size_t k = 0; k < nodes_.size(); ++k)
    b.axes.push_back({lo_[k] - h_[k], hi_[k] + h_[k]});
  return b;
}

int BilinearGrid::linear_index(std::span<const int> multi) const {
  int idx = 0;
  for (int k = 0; k < dim_; ++k) {
    if (multi[k] < 0 || multi[k] >= nodes_[k]) throw std::out_of_range("BilinearGrid::linear_index");
    idx = idx * nodes_[k] + multi[k];
  }
  return idx;
}

std::vector<int> BilinearGrid::multi_index(int linear) const {
  std::vector<int> m(dim_);
  for (int k = dim_ - 1; k >= 0; --k) {
    m[k] = linear % nodes_[k];
    linear /= nodes_[k];
  }
  return m;
}

bool BilinearGrid::in_domain(std::span<const double> x) const {
  for (int k = 0; k < dim_; ++k)
    if (x[k] < lo_[k] - h_[k] || x[k] > hi_[k] + h_[k]) return false;
  return true;
}

void BilinearGrid::evaluate_nonzero(std::span<const double> x, SparsePsi& out) const {
  if (!in_domain(x)) throw std::domain_error("BilinearGrid: point outside coverage");
  out.clear();
  int lo_node[16], n_active[16];
  double w[16][2];
  for (int k = 0; k < dim_; ++k) {
    double u = (x[k] - lo_[k]) / h_[k];
    int i0 = static_cast<int>(std::floor(u));
    int cnt = 0;
    for (int i : {i0, i0 + 1}) {
      if (i < 0 || i >= nodes_[k]) continue;
      double v = 1.0 - std::fabs(u - i);
      if (v > 0.0) {
        if (cnt == 0) lo_node[k] = i;
        w[k][cnt++] = v;
      }
    }
    if (cnt == 0) return;  // inside coverage ring but all hats vanish only at exact edge
    n_active[k] = cnt;
  }
  int combos = 1;
  for (int k = 0; k < dim_; ++k) combos *= n_active[k];
  int multi[16];
  for (int c = 0; c < combos; ++c) {
    int cc = c;
    double val = 1.0;
    for (int k = 0; k < dim_; ++k) {
      int pick = cc % n_active[k];
      cc /= n_active[k];
      multi[k] = lo_node[k] + pick;
      val *= w[k][pick];
    }
    out.emplace_back(linear_index(std::span<const int>(multi, dim_)), val);
  }
}

double BilinearGrid::value(int i, std::span<const double> x) const {
  if (!in_domain(x)) return 0.0;
  auto multi = multi_index(i);
  double val = 1.0;
  for (int k = 0; k < dim_; ++k) {
    double u = (x[k] - lo_[k]) / h_[k] - multi[k];
    double v = 1.0 - std::fabs(u);
    if (v <= 0.0) return 0.0;
    val *= v;
  }
  return val;
}

bool BilinearGrid::grad_log_value(int i, std::span<const double> x,
                                  std::span<double> out) const {
  if (!in_domain(x)) return false;
  auto multi = multi_index(i);
  for (int k = 0; k < dim_; ++k) {
    double u = (x[k] - lo_[k]) / h_[k] - multi[k];
    double v = 1.0 - std::fabs(u);
    if (v <= 0.0) return false;
    out[k] = u == 0.0 ? 0.0 : -(u > 0 ? 1.0 : -1.0) / (v * h_[k]);
  }
  return true;
}

Box BilinearGrid::support(int i) const {
  auto multi = multi_index(i);
  Box b;
  b.axes.resize(dim_);
  for (int k = 0; k < dim_; ++k) {
    double node = lo_[k] + h_[k] * multi[k];
    b.axes[k] = Interval{node - h_[k], node + h_[k]};
  }
  return b;
}

json BilinearGrid::descriptor() const {
  return json{{"kind", "bilinear_grid"}, {"lo", lo_}, {"hi", hi_}, {"nodes", nodes_}};
}

// ---------------------------------------------------------------------------
// Collective variables

namespace {
std::map<std::string, CollectiveVariable>& cv_registry() {
  static std::map<std::string, CollectiveVariable> reg;
  return reg;
}
std::mutex cv_mutex;
}  // namespace

CollectiveVariable identity_cv(int dim) {
  CollectiveVariable cv;
  cv.name = "identity:" + std::to_string(dim);
  cv.in_dim = dim;
  cv.out_dim = dim;
  cv.map = [](std::span<const double> x, std::span<double> out) {
    std::copy(x.begin(), x.end(), out.begin());
  };
  return cv;
}

CollectiveVariable coordinate_cv(int in_dim, std::vector<int> coords) {
  CollectiveVariable cv;
  std::string ix;
  for (std::size_t k = 0; k < coords.size(); ++k)
    ix += (k ? "," : "") + std::to_string(coords[k]);
  cv.name = "coords:" + std::to_string(in_dim) + ":" + ix;
  cv.in_dim = in_dim;
  cv.out_dim = static_cast<int>(coords.size());
  cv.map = [coords](std::span<const double> x, std::span<double> out) {
    for (std::size_t k = 0; k < coords.size(); ++k) out[k] = x[coords[k]];
  };
  return cv;
}

CollectiveVariable scaled_coordinate_cv(int in_dim, std::vector<int> coords, double scale) {
  CollectiveVariable cv;
  std::string ix;
  for (std::size_t k = 0; k < coords.size(); ++k)
    ix += (k ? "," : "") + std::to_string(coords[k]);
  std::ostringstream name;
  name.precision(17);
  name << "scaled_coords:" << in_dim << ":" << ix << ":" << scale;
  cv.name = name.str();
  cv.in_dim = in_dim;
  cv.out_dim = static_cast<int>(coords.size());
  cv.map = [coords, scale](std::span<const double> x, std::span<double> out) {
    for (std::size_t k = 0; k < coords.size(); ++k) out[k] = scale * x[coords[k]];
  };
  return cv;
}

void register_cv(const CollectiveVariable& cv) {
  std::lock_guard<std::mutex> lock(cv_mutex);
  cv_registry()[cv.name] = cv;
}

CollectiveVariable cv_from_name(const std::string& name) {
  {
    std::lock_guard<std::mutex> lock(cv_mutex);
    auto it = cv_registry().find(name);
    if (it != cv_registry().end()) return it->second;
  }
  std::vector<std::string> parts;
  std::stringstream ss(name);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(tok);
  if (parts.size() == 2 && parts[0] == "identity") return identity_cv(std::stoi(parts[1]));
  if (parts.size() == 3 && parts[0] == "coords") {
    auto cs = parse_doubles(parts[2]);
    std::vector<int> coords(cs.begin(), cs.end());
    return coordinate_cv(std::stoi(parts[1]), coords);
  }
  if (parts.size() == 4 && parts[0] == "scaled_coords") {
    auto cs = parse_doubles(parts[2]);
    std::vector<int> coords(cs.begin(), cs.end());
    return scaled_coordinate_cv(std::stoi(parts[1]), coords, std::stod(parts[3]));
  }
  throw std::invalid_argument("cv_from_name: unknown collective variable '" + name + "'");
}

// ---------------------------------------------------------------------------
// ComposedBias

ComposedBias::ComposedBias(std::shared_ptr<const BiasSet> inner, CollectiveVariable cv)
    : BiasSet(inner->size(), cv.in_dim, inner->partition_of_unity()),
      inner_(std::move(inner)),
      cv_(std::move(cv)) {
  if (cv_.out_dim != inner_->dim())
    throw std::invalid_argument("ComposedBias: cv output dim != inner dim");
}

void ComposedBias::apply_cv(std::span<const double> x, std::span<double> theta) const {
  cv_.map(x, theta);
}

bool ComposedBias::in_domain(std::span<const double> x) const {
  double theta[16];
  apply_cv(x, std::span<double>(theta, cv_.out_dim));
  return inner_->in_domain(std::span<const double>(theta, cv_.out_dim));
}

void ComposedBias::evaluate_nonzero(std::span<const double> x, SparsePsi& out) const {
  double theta[16];
  apply_cv(x, std::span<double>(theta, cv_.out_dim));
  inner_->evaluate_nonzero(std::span<const double>(theta, cv_.out_dim), out);
}

double ComposedBias::value(int i, std::span<const double> x) const {
  double theta[16];
  apply_cv(x, std::span<double>(theta, cv_.out_dim));
  return inner_->value(i, std::span<const double>(theta, cv_.out_dim));
}

Box ComposedBias::support(int i) const { return inner_->support(i); }

json ComposedBias::descriptor() const {
  return json{{"kind", "composed"}, {"cv", cv_.name}, {"inner", inner_->descriptor()}};
}

// ---------------------------------------------------------------------------
// SubsetBias

SubsetBias::SubsetBias(std::shared_ptr<const BiasSet> inner, std::vector<int> keep)
    : BiasSet(static_cast<int>(keep.size()), inner->dim(), false),
      inner_(std::move(inner)),
      keep_(std::move(keep)) {
  if (keep_.empty()) throw std::invalid_argument("SubsetBias: empty subset");
  inverse_.assign(inner_->size(), -1);
  for (std::size_t s = 0; s < keep_.size(); ++s) {
    int i = keep_[s];
    if (i < 0 || i >= inner_->size()) throw std::out_of_range("SubsetBias: index out of range");
    if (inverse_[i] != -1) throw std::invalid_argument("SubsetBias: duplicate index");
    inverse_[i] = static_cast<int>(s);
  }
  partition_of_unity_ =
      inner_->partition_of_unity() && static_cast<int>(keep_.size()) == inner_->size();
}

bool SubsetBias::in_domain(std::span<const double> x) const { return inner_->in_domain(x); }

void SubsetBias::evaluate_nonzero(std::span<const double> x, SparsePsi& out) const {
  SparsePsi inner_nz;
  inner_->evaluate_nonzero(x, inner_nz);
  out.clear();
  for (auto& [i, v] : inner_nz)
    if (inverse_[i] >= 0) out.emplace_back(inverse_[i], v);
}

double SubsetBias::value(int i, std::span<const double> x) const {
  return inner_->value(keep_[i], x);
}

Box SubsetBias::support(int i) const { return inner_->support(keep_[i]); }

json SubsetBias::descriptor() const {
  return json{{"kind", "subset"}, {"keep", keep_}, {"inner", inner_->descriptor()}};
}

// ---------------------------------------------------------------------------
// Support graph and irreducibility

bool SupportGraph::adjacent(int i, int j) const {
  return std::binary_search(neighbors[i].begin(), neighbors[i].end(), j);
}

std::vector<int> SupportGraph::component_of(int start) const {
  std::vector<bool> seen(L, false);
  std::vector<int> stack{start}, comp;
  seen[start] = true;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    comp.push_back(u);
    for (int v : neighbors[u])
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
  }
  std::sort(comp.begin(), comp.end());
  return comp;
}

bool SupportGraph::connected() const {
  return L == 0 || static_cast<int>(component_of(0).size()) == L;
}

SupportGraph support_graph(const BiasSet& bias) {
  SupportGraph g;
  g.L = bias.size();
  g.neighbors.resize(g.L);
  auto period = bias.support_period();
  std::vector<Box> boxes(g.L);
  for (int i = 0; i < g.L; ++i) boxes[i] = bias.support(i);
  for (int i = 0; i < g.L; ++i) {
    g.neighbors[i].push_back(i);
    for (int j = i + 1; j < g.L; ++j) {
      if (boxes_overlap(boxes[i], boxes[j], period)) {
        g.neighbors[i].push_back(j);
        g.neighbors[j].push_back(i);
      }
    }
  }
  for (auto& n : g.neighbors) std::sort(n.begin(), n.end());
  return g;
}

IrreducibilityReport check_irreducibility(const BiasSet& bias) {
  auto g = support_graph(bias);
  IrreducibilityReport r;
  if (g.connected()) return r;
  r.irreducible = false;
  r.witness = g.component_of(0);
  return r;
}

std::vector<std::vector<int>> strongly_connected_components(
    const std::function<bool(int, int)>& edge, int L) {
  std::vector<std::vector<int>> adj(L);
  for (int u = 0; u < L; ++u)
    for (int v = 0; v < L; ++v)
      if (u != v && edge(u, v)) adj[u].push_back(v);

  // iterative Tarjan
  std::vector<int> index(L, -1), low(L, 0), comp_id(L, -1);
  std::vector<bool> on_stack(L, false);
  std::vector<int> stack;
  std::vector<std::vector<int>> comps;
  int next_index = 0;
  struct Frame {
    int v;
    std::size_t child;
  };
  for (int root = 0; root < L; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& f = call.back();
      if (f.child < adj[f.v].size()) {
        int w = adj[f.v][f.child++];
        if (index[w] == -1) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
      } else {
        if (low[f.v] == index[f.v]) {
          std::vector<int> comp;
          int w;
          do {
            w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            comp_id[w] = static_cast<int>(comps.size());
            comp.push_back(w);
          } while (w != f.v);
          std::sort(comp.begin(), comp.end());
          comps.push_back(std::move(comp));
        }
        int v = f.v;
        call.pop_back();
        if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      }
    }
  }
  // topological order of the condensation, sources first
  int C = static_cast<int>(comps.size());
  std::vector<int> in_deg(C, 0);
  for (int u = 0; u < L; ++u)
    for (int v : adj[u])
      if (comp_id[u] != comp_id[v]) ++in_deg[comp_id[v]];
  // Tarjan emits components in reverse topological order; sort stably by
  // (has incoming edges, emission order reversed) to put sources first.
  std::vector<int> order(C);
  for (int c = 0; c < C; ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    bool sa = in_deg[a] == 0, sb = in_deg[b] == 0;
    if (sa != sb) return sa;
    return a > b;
  });
  std::vector<std::vector<int>> out;
  out.reserve(C);
  for (int c : order) out.push_back(std::move(comps[c]));
  return out;
}

IrreducibilityReport check_irreducibility_matrix(const std::function<bool(int, int)>& edge,
                                                 int L) {
  IrreducibilityReport r;
  auto comps = strongly_connected_components(edge, L);
  if (comps.size() == 1) return r;
  r.irreducible = false;
  r.witness = comps.front();  // a source component: nothing outside reaches it
  return r;
}

IrreducibilityReport check_irreducibility(
    const BiasSet& bias, const std::vector<std::vector<std::vector<double>>>& samples) {
  int L = bias.size();
  if (static_cast<int>(samples.size()) != L)
    throw std::invalid_argument("check_irreducibility: need one sample set per stratum");
  for (int j = 0; j < L; ++j)
    if (samples[j].empty())
      throw std::invalid_argument("check_irreducibility: empty sample set for stratum " +
                                  std::to_string(j));
  std::vector<std::vector<bool>> hit(L, std::vector<bool>(L, false));
  SparsePsi nz;
  for (int j = 0; j < L; ++j)
    for (const auto& x : samples[j]) {
      bias.evaluate_nonzero(x, nz);
      for (auto& [i, v] : nz)
        if (v > 0.0) hit[j][i] = true;
    }
  return check_irreducibility_matrix([&](int a, int b) { return hit[a][b]; }, L);
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json bias_to_json(const BiasSet& bias) { return bias.descriptor(); }

std::shared_ptr<BiasSet> bias_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return std::make_shared<UniformBias>(j.at("dim").get<int>());
  if (kind == "indicator_grid")
    return std::make_shared<IndicatorGrid>(
        j.at("dim").get<int>(), j.at("resolution").get<int>(), j.at("periodic").get<bool>(),
        j.value("lo", std::vector<double>{}), j.value("hi", std::vector<double>{}));
  if (kind == "tail_family")
    return std::make_shared<TailFamily>(j.at("threshold").get<double>(),
                                        j.at("resolution").get<int>());
  if (kind == "bilinear_grid")
    return std::make_shared<BilinearGrid>(j.at("lo").get<std::vector<double>>(),
                                          j.at("hi").get<std::vector<double>>(),
                                          j.at("nodes").get<std::vector<int>>());
  if (kind == "composed")
    return std::make_shared<ComposedBias>(bias_from_json(j.at("inner")),
                                          cv_from_name(j.at("cv").get<std::string>()));
  if (kind == "subset")
    return std::make_shared<SubsetBias>(bias_from_json(j.at("inner")),
                                        j.at("keep").get<std::vector<int>>());
  throw std::invalid_argument("bias_from_json: unknown kind '" + kind + "'");
}

}  // namespace emus
