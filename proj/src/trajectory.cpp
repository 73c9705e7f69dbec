#include "emus/trajectory.hpp"

#include <cstring>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace emus {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'E', 'M', 'U', 'S', 'T', 'R', 'J', '1'};
}

void Trajectory::save(const std::filesystem::path& base) const {
  std::filesystem::path bin = base;
  bin += ".traj";
  std::ofstream os(bin, std::ios::binary);
  if (!os) throw std::runtime_error("Trajectory::save: cannot open " + bin.string());
  os.write(kMagic, sizeof(kMagic));
  std::uint64_t n = size();
  std::uint32_t d = static_cast<std::uint32_t>(dim_);
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  os.write(reinterpret_cast<const char*>(&d), sizeof(d));
  // columnar: coordinate k of all states contiguous
  std::vector<double> col(n);
  for (int k = 0; k < dim_; ++k) {
    for (std::uint64_t t = 0; t < n; ++t) col[t] = data_[t * dim_ + k];
    os.write(reinterpret_cast<const char*>(col.data()), n * sizeof(double));
  }
  json side{{"stratum", stratum},
            {"method", info.method},
            {"step", info.step},
            {"dt", info.dt},
            {"walkers", info.walkers},
            {"stretch", info.stretch},
            {"thin", info.thin},
            {"burn_in", info.burn_in},
            {"seed", info.seed},
            {"acceptance", info.acceptance},
            {"states", n},
            {"dim", d}};
  std::filesystem::path meta = base;
  meta += ".traj.json";
  std::ofstream ms(meta);
  ms << side.dump(2) << '\n';
}

Trajectory Trajectory::load(const std::filesystem::path& base) {
  std::filesystem::path bin = base;
  bin += ".traj";
  std::ifstream is(bin, std::ios::binary);
  if (!is) throw std::runtime_error("Trajectory::load: cannot open " + bin.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("Trajectory::load: bad header in " + bin.string());
  std::uint64_t n = 0;
  std::uint32_t d = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  is.read(reinterpret_cast<char*>(&d), sizeof(d));
  Trajectory traj(static_cast<int>(d));
  traj.data_.resize(n * d);
  std::vector<double> col(n);
  for (std::uint32_t k = 0; k < d; ++k) {
    is.read(reinterpret_cast<char*>(col.data()), n * sizeof(double));
    for (std::uint64_t t = 0; t < n; ++t) traj.data_[t * d + k] = col[t];
  }
  if (!is) throw std::runtime_error("Trajectory::load: truncated file " + bin.string());
  std::filesystem::path meta = base;
  meta += ".traj.json";
  std::ifstream ms(meta);
  if (ms) {
    json side = json::parse(ms);
    traj.stratum = side.value("stratum", -1);
    traj.info.method = side.value("method", std::string{});
    traj.info.step = side.value("step", 0.0);
    traj.info.dt = side.value("dt", 0.0);
    traj.info.walkers = side.value("walkers", 0);
    traj.info.stretch = side.value("stretch", 0.0);
    traj.info.thin = side.value("thin", 1);
    traj.info.burn_in = side.value("burn_in", std::uint64_t{0});
    traj.info.seed = side.value("seed", std::uint64_t{0});
    traj.info.acceptance = side.value("acceptance", 1.0);
  }
  return traj;
}

void Trajectory::export_csv(std::ostream& os) const {
  os.precision(17);
  for (std::size_t t = 0; t < size(); ++t) {
    for (int k = 0; k < dim_; ++k) {
      if (k) os << ',';
      os << data_[t * dim_ + k];
    }
    os << '\n';
  }
}

}  // namespace emus
