#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace emus {

/// Schema violation; `path` names the offending field (dot-separated).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field_path, const std::string& what)
      : std::runtime_error(field_path + ": " + what), path(std::move(field_path)) {}
  std::string path;
};

struct ExperimentConfig {
  std::string experiment;  // tail | lowtemp | mixture | custom
  std::uint64_t seed = 1;
  int replicates = 1;
  std::string output_dir = "out";
  int workers = 0;
  nlohmann::json sections;  // raw document for experiment-specific blocks
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Schema check; throws ConfigError naming the field. `for_compare` also
/// requires a matched-budget "direct" section.
void validate_config(const ExperimentConfig& cfg, bool for_compare = false);

/// Total number of retained stratified samples implied by the config (the
/// budget a direct comparison must match).
std::uint64_t stratified_budget(const ExperimentConfig& cfg);

}  // namespace emus
