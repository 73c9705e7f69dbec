#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>
#include <unistd.h>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "emus/config.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("emus_cli_" + std::to_string(::getpid())) ;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(EMUS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json tail_config(const fs::path& out) {
  return json{{"experiment", "tail"},
              {"seed", 12},
              {"replicates", 2},
              {"output_dir", out.string()},
              {"tail", {{"threshold", 5.0}, {"potential", "linear"},
                        {"samples_per_stratum", 800}}}};
}

}  // namespace

TEST_CASE("validate accepts and rejects configs") {
  TempDir tmp;
  auto good = write_config(tmp.path, "good.json", tail_config(tmp.path / "out"));
  REQUIRE(run_cli("validate " + good.string()) == 0);

  json bad = tail_config(tmp.path / "out");
  bad["tail"]["threshold"] = -1.0;
  auto badp = write_config(tmp.path, "bad.json", bad);
  REQUIRE(run_cli("validate " + badp.string()) == 2);

  json burn{{"experiment", "mixture"},
            {"output_dir", (tmp.path / "o").string()},
            {"mixture", {{"steps", 100}, {"burn_in", 200},
                         {"synthetic", {{"means", {0.0, 2.0}}, {"sds", {0.5, 0.5}},
                                        {"weights", {0.5, 0.5}}, {"n", 50}}},
                         {"components", 2}}}};
  auto burnp = write_config(tmp.path, "burn.json", burn);
  REQUIRE(run_cli("validate " + burnp.string()) == 2);

  REQUIRE(run_cli("validate " + (tmp.path / "missing.json").string()) == 2);
}

TEST_CASE("run writes the report tree deterministically") {
  TempDir tmp;
  auto out1 = tmp.path / "out1";
  auto out2 = tmp.path / "out2";
  auto cfg1 = write_config(tmp.path, "a.json", tail_config(out1));
  auto cfg2 = write_config(tmp.path, "b.json", tail_config(out2));
  REQUIRE(run_cli("run " + cfg1.string()) == 0);
  REQUIRE(run_cli("run " + cfg2.string()) == 0);

  REQUIRE(fs::exists(out1 / "summary.json"));
  REQUIRE(fs::exists(out1 / "matrices" / "overlap.csv"));
  REQUIRE(fs::exists(out1 / "matrices" / "weights.csv"));
  REQUIRE(fs::exists(out1 / "logs" / "run.log"));

  json summary = json::parse(slurp(out1 / "summary.json"));
  REQUIRE(summary.at("experiment") == "tail");
  REQUIRE(summary.at("runs").size() == 2);
  REQUIRE(summary.contains("estimate"));
  REQUIRE(summary.contains("rel_std_error"));
  REQUIRE(summary.at("aggregate").contains("mean"));
  double est = summary.at("estimate").get<double>();
  double exact = summary.at("exact").get<double>();
  REQUIRE(std::fabs(est / exact - 1.0) < 0.5);

  // identical seeds, identical bytes
  REQUIRE(slurp(out1 / "summary.json") == slurp(out2 / "summary.json"));
}

TEST_CASE("compare-direct needs a matched budget") {
  TempDir tmp;
  json cfg = tail_config(tmp.path / "out");
  cfg["replicates"] = 1;
  // threshold 5 with the linear rule means 7 strata
  cfg["direct"] = {{"total_samples", 999}};
  auto p1 = write_config(tmp.path, "c1.json", cfg);
  REQUIRE(run_cli("compare-direct " + p1.string()) == 2);

  cfg["direct"]["total_samples"] = 7 * 800;
  auto p2 = write_config(tmp.path, "c2.json", cfg);
  REQUIRE(run_cli("compare-direct " + p2.string()) == 0);
  json cmp = json::parse(slurp(tmp.path / "out" / "comparison.json"));
  REQUIRE(cmp.at("replicates").size() == 1);
  REQUIRE(cmp.at("replicates")[0].contains("stratified"));
  REQUIRE(cmp.at("replicates")[0].contains("direct"));
}

TEST_CASE("runtime failures exit with code one") {
  TempDir tmp;
  json cfg{{"experiment", "mixture"},
           {"output_dir", (tmp.path / "out").string()},
           {"mixture", {{"steps", 100}, {"burn_in", 10},
                        {"data", (tmp.path / "no_such_file.csv").string()},
                        {"components", 2}}}};
  auto p = write_config(tmp.path, "m.json", cfg);
  REQUIRE(run_cli("run " + p.string()) == 1);
}

TEST_CASE("config loader reports field paths") {
  TempDir tmp;
  auto p = write_config(tmp.path, "x.json", json{{"experiment", "lowtemp"},
                                                 {"lowtemp", {{"beta", 5.0}}}});
  emus::ExperimentConfig cfg = emus::load_config(p);
  try {
    emus::validate_config(cfg);
    FAIL("expected a config error");
  } catch (const emus::ConfigError& e) {
    REQUIRE(e.path == "lowtemp.total_steps");
  }
}
