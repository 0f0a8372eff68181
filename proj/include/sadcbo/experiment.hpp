#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sadcbo/benchmarks.hpp"
#include "sadcbo/engine.hpp"
#include "sadcbo/rng.hpp"

namespace sadcbo {

inline constexpr char kVersion[] = "0.1.0";
inline constexpr char kWorkersEnvVar[] = "SADCBO_WORKERS";
inline constexpr char kResultsHeader[] =
    "t,cumulative_cost,y_best,phase,selected_mask,delta_R_bound,s_t,"
    "baseline,trial,seed";

// FNV-1a over the bytes of text; used to hash canonical config dumps.
std::uint64_t fnv1a64(std::string_view text);

// The full default experiment configuration for one base function.  Every
// key the config format understands appears here with its default value.
nlohmann::json default_config(BaseFunction base);

// Merges the input over the defaults, validates values, and returns the
// fully resolved configuration.  Unknown or ill-typed keys, out-of-range
// values, and malformed sweep axes raise std::invalid_argument listing every
// offending dotted path.  A manifest produced by run_experiment may be
// passed directly; its "config" object is extracted first.
nlohmann::json normalize_config(const nlohmann::json& input);

// One point of the sweep grid: a fully resolved configuration with the
// sweep axes applied and removed, plus a directory-safe name and the hash
// of its canonical dump (which seeds the cell's random streams).
struct SweepCell {
  std::string name;
  std::uint64_t hash = 0;
  nlohmann::json config;
};

// Cartesian expansion of the resolved config's sweep axes, first axis
// slowest.  A config without sweeps yields a single cell named "base".
std::vector<SweepCell> expand_cells(const nlohmann::json& resolved);

// Engine inputs assembled from one cell's resolved configuration.
ProblemSpec problem_spec_from(const nlohmann::json& cell);
EngineHyper hyper_from(const nlohmann::json& cell);
// Fixed laws copy the configured costs; random laws draw one cost vector per
// trial from cost_rng (a paired stream, so baselines see the same costs).
CostModel cost_model_from(const nlohmann::json& cell, int context_dim,
                          Rng& cost_rng);

// Seeds for one (cell, trial, baseline) run.  Paired streams depend only on
// the cell and trial so that baselines face identical contexts, noise,
// initial designs, and cost draws; `identity` also mixes in the baseline and
// is the seed recorded in the results.
struct TrialSeeds {
  std::uint64_t identity = 0;
  SeedBundle bundle;
};

TrialSeeds trial_seeds(std::uint64_t base_seed, std::uint64_t cell_hash,
                       int trial, BaselineId baseline, bool paired);

// Runs one seeded trial of the cell.  The problem must be the one built
// from problem_spec_from(cell.config); it is shared across trials because
// its scaling constants are frozen at construction.
TrialResult run_cell_trial(const Problem& problem, const SweepCell& cell,
                           BaselineId baseline, int trial);

// One line of a results CSV.
struct ResultRecord {
  int t = 0;
  double cumulative_cost = 0.0;
  double y_best = 0.0;
  int phase = 0;
  std::uint64_t selected_mask = 0;
  double delta_r_bound = 0.0;
  double s_threshold = 0.0;
  std::string baseline;
  int trial = 0;
  std::uint64_t seed = 0;
};

void write_results_csv(const std::filesystem::path& path,
                       const std::vector<ResultRecord>& records);
std::vector<ResultRecord> read_results_csv(const std::filesystem::path& path);

struct ExperimentOutcome {
  std::filesystem::path directory;
  int cells = 0;
  int trials = 0;                      // trials attempted (per baseline)
  std::vector<std::string> failures;   // "cell/baseline/trial: message"
};

// Runs every (cell x baseline x trial) across a worker pool and writes, per
// cell, results.csv / summary.csv / inclusion.csv / switch.csv under
// out_dir/<cell>/, plus a manifest.json capturing the resolved config.
// Rerunning the same config (or the manifest itself) reproduces the output
// files byte for byte.  workers <= 0 resolves via SADCBO_WORKERS, then
// hardware concurrency.
ExperimentOutcome run_experiment(const nlohmann::json& config,
                                 const std::filesystem::path& out_dir,
                                 int workers = 0);

// Recomputes each cell's summary/inclusion/switch tables from its raw
// results.csv and returns a human-readable report of final best values.
std::string summarize_directory(const std::filesystem::path& directory);

// First- and total-order sensitivity indices of a benchmark function over
// its native box, one labelled row per input dimension.
std::string sobol_report(const std::string& function_name,
                         Eigen::Index n_base, std::uint64_t seed);

int resolve_workers(int requested);

}  // namespace sadcbo
