#include <iostream>

#include <CLI11.hpp>

#include "emus/estimator.hpp"
#include "emus/experiments.hpp"

namespace {

int dispatch(const std::string& mode, const std::string& config_path) {
  try {
    emus::ExperimentConfig cfg = emus::load_config(config_path);
    if (mode == "validate") {
      emus::validate_config(cfg);
      std::cout << "ok: " << config_path << '\n';
      return 0;
    }
    if (mode == "run") {
      emus::run_experiment(cfg, std::cout);
      std::cout << "wrote " << cfg.output_dir << "/summary.json\n";
      return 0;
    }
    emus::run_compare_direct(cfg, std::cout);
    std::cout << "wrote " << cfg.output_dir << "/comparison.json\n";
    return 0;
  } catch (const emus::ConfigError& e) {
    std::cerr << "config error at " << e.path << ": " << e.what() << '\n';
    return 2;
  } catch (const emus::ReducibleMatrixError& e) {
    std::cerr << "sampling error: " << e.what() << " (witness strata:";
    for (int i : e.witness) std::cerr << ' ' << i;
    std::cerr << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stratified MCMC estimation of expectations, tail probabilities and marginals"};
  app.require_subcommand(1);

  std::string config_path;
  auto add = [&](const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("config", config_path, "experiment config (JSON)")->required();
    return sub;
  };
  CLI::App* run = add("run", "run an experiment and write its report files");
  CLI::App* cmp = add("compare-direct",
                      "run the experiment and an unstratified reference at a matched budget");
  CLI::App* val = add("validate", "schema-check a config without running it");

  CLI11_PARSE(app, argc, argv);
  if (run->parsed()) return dispatch("run", config_path);
  if (cmp->parsed()) return dispatch("compare-direct", config_path);
  if (val->parsed()) return dispatch("validate", config_path);
  return 2;
}
