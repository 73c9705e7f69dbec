#include "emus/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace emus {

using nlohmann::json;

namespace {

const json& require(const json& j, const std::string& parent, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(parent.empty() ? key : parent + "." + key, "missing field");
  return *it;
}

double require_number(const json& j, const std::string& parent, const std::string& key) {
  const json& v = require(j, parent, key);
  if (!v.is_number()) throw ConfigError(parent + "." + key, "must be a number");
  return v.get<double>();
}

std::uint64_t require_count(const json& j, const std::string& parent, const std::string& key) {
  const json& v = require(j, parent, key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(parent + "." + key, "must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string(), "cannot open config file");
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  if (!doc.is_object()) throw ConfigError("", "top level must be an object");
  cfg.experiment = require(doc, "", "experiment").get<std::string>();
  cfg.seed = doc.value("seed", std::uint64_t{1});
  cfg.replicates = doc.value("replicates", 1);
  cfg.output_dir = doc.value("output_dir", std::string{"out"});
  cfg.workers = doc.value("workers", 0);
  cfg.sections = std::move(doc);
  return cfg;
}

std::uint64_t stratified_budget(const ExperimentConfig& cfg) {
  const json& doc = cfg.sections;
  if (cfg.experiment == "tail") {
    const json& s = doc.at("tail");
    double M = s.at("threshold").get<double>();
    int K = s.value("resolution", 0);
    if (K <= 0) K = static_cast<int>(std::ceil(M));  // linear potential rule
    return (K + 2) * s.at("samples_per_stratum").get<std::uint64_t>();
  }
  if (cfg.experiment == "lowtemp") {
    const json& s = doc.at("lowtemp");
    return s.at("total_steps").get<std::uint64_t>();
  }
  if (cfg.experiment == "mixture") {
    const json& s = doc.at("mixture");
    std::uint64_t steps = s.at("steps").get<std::uint64_t>();
    std::uint64_t burn = s.value("burn_in", std::uint64_t{0});
    int thin = s.value("thin", 1);
    int walkers = s.value("walkers", 100);
    int nodes = s.value("nodes", 50);
    std::uint64_t kept = (steps - burn + thin - 1) / thin;
    // strata actually sampled are data dependent; budget counts the full grid
    return kept * walkers * static_cast<std::uint64_t>(nodes) * nodes;
  }
  throw ConfigError("experiment", "no budget rule for experiment '" + cfg.experiment + "'");
}

void validate_config(const ExperimentConfig& cfg, bool for_compare) {
  static const std::set<std::string> kinds{"tail", "lowtemp", "mixture", "custom"};
  if (!kinds.count(cfg.experiment))
    throw ConfigError("experiment", "must be one of tail, lowtemp, mixture, custom");
  if (cfg.replicates < 1) throw ConfigError("replicates", "must be >= 1");
  if (cfg.workers < 0) throw ConfigError("workers", "must be >= 0");
  const json& doc = cfg.sections;

  if (cfg.experiment == "tail") {
    const json& s = require(doc, "", "tail");
    double M = require_number(s, "tail", "threshold");
    if (!(M > 0.0)) throw ConfigError("tail.threshold", "must be positive");
    if (require_count(s, "tail", "samples_per_stratum") == 0)
      throw ConfigError("tail.samples_per_stratum", "must be positive");
    std::string pot = s.value("potential", std::string{"linear"});
    if (pot != "linear" && pot != "quadratic")
      throw ConfigError("tail.potential", "must be linear or quadratic");
  } else if (cfg.experiment == "lowtemp") {
    const json& s = require(doc, "", "lowtemp");
    if (!(require_number(s, "lowtemp", "beta") > 0.0))
      throw ConfigError("lowtemp.beta", "must be positive");
    if (require_count(s, "lowtemp", "total_steps") == 0)
      throw ConfigError("lowtemp.total_steps", "must be positive");
    double bf = s.value("burn_in_fraction", 0.1);
    if (bf < 0.0 || bf >= 1.0) throw ConfigError("lowtemp.burn_in_fraction", "must be in [0,1)");
  } else if (cfg.experiment == "mixture") {
    const json& s = require(doc, "", "mixture");
    std::uint64_t steps = require_count(s, "mixture", "steps");
    std::uint64_t burn = s.value("burn_in", std::uint64_t{0});
    if (steps <= burn) throw ConfigError("mixture.burn_in", "must be smaller than steps");
    if (s.value("thin", 1) < 1) throw ConfigError("mixture.thin", "must be >= 1");
    if (s.value("walkers", 100) < 2) throw ConfigError("mixture.walkers", "need >= 2 walkers");
    int K = s.value("components", 3);
    if (K < 1) throw ConfigError("mixture.components", "must be >= 1");
    if (!s.contains("data") && !s.contains("synthetic"))
      throw ConfigError("mixture.data", "either a data path or a synthetic block is required");
    double lo = s.value("grid_lo", -1.0), hi = s.value("grid_hi", 3.2);
    if (!(hi > lo)) throw ConfigError("mixture.grid_hi", "must exceed grid_lo");
    if (s.value("nodes", 50) < 2) throw ConfigError("mixture.nodes", "need >= 2 grid nodes");
  } else {  // custom
    const json& s = require(doc, "", "custom");
    require(s, "custom", "target");
    require(s, "custom", "bias");
    const json& sam = require(s, "custom", "sampler");
    std::uint64_t steps = require_count(sam, "custom.sampler", "steps");
    std::uint64_t burn = sam.value("burn_in", std::uint64_t{0});
    if (steps <= burn) throw ConfigError("custom.sampler.burn_in", "must be smaller than steps");
  }

  if (for_compare) {
    const json& d = require(doc, "", "direct");
    std::uint64_t declared = require_count(d, "direct", "total_samples");
    std::uint64_t budget = stratified_budget(cfg);
    if (declared != budget)
      throw ConfigError("direct.total_samples",
                        "must match the stratified budget (" + std::to_string(budget) + ")");
  }
}

}  // namespace emus
