#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "sadcbo/experiment.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return nlohmann::json::parse(in);  // parse errors carry line/column info
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-aware contextual Bayesian optimization benchmarks"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int workers = 0;
  CLI::App* run =
      app.add_subcommand("run", "Run every trial of an experiment config");
  run->add_option("config", config_path,
                  "JSON experiment config (or a previous manifest.json)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory (default results/<name>)");
  run->add_option("--workers", workers,
                  "Worker threads (default $SADCBO_WORKERS, then hardware)");

  std::string function_name;
  std::int64_t n_base = 1 << 16;
  std::uint64_t sobol_seed = 1;
  CLI::App* sobol = app.add_subcommand(
      "sobol", "Print first/total-order sensitivity indices of a benchmark");
  sobol->add_option("function", function_name, "ackley5 or hartmann6")
      ->required();
  sobol->add_option("--n", n_base, "Quasi-random base sample size");
  sobol->add_option("--seed", sobol_seed, "Digital-shift seed");

  std::string summarize_dir;
  CLI::App* summarize = app.add_subcommand(
      "summarize", "Recompute summary tables from a results directory");
  summarize->add_option("dir", summarize_dir, "Directory holding manifest.json")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const nlohmann::json resolved =
          sadcbo::normalize_config(load_json(config_path));
      const std::filesystem::path out =
          out_dir.empty() ? std::filesystem::path("results") /
                                resolved.at("name").get<std::string>()
                          : std::filesystem::path(out_dir);
      const sadcbo::ExperimentOutcome outcome =
          sadcbo::run_experiment(resolved, out, workers);
      std::cout << "wrote " << outcome.cells << " cell(s), " << outcome.trials
                << " trial(s) to " << outcome.directory.string() << "\n";
      if (!outcome.failures.empty()) {
        std::cerr << outcome.failures.size()
                  << " trial(s) failed (recorded in manifest.json):\n";
        for (const std::string& failure : outcome.failures) {
          std::cerr << "  " << failure << "\n";
        }
        return 1;
      }
    } else if (sobol->parsed()) {
      std::cout << sadcbo::sobol_report(function_name, n_base, sobol_seed);
    } else if (summarize->parsed()) {
      std::cout << sadcbo::summarize_directory(summarize_dir);
    }
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }
  return 0;
}
