#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sadcbo/acquisition.hpp"
#include "sadcbo/benchmarks.hpp"
#include "sadcbo/gp.hpp"
#include "sadcbo/rng.hpp"
#include "sadcbo/sensitivity.hpp"
#include "sadcbo/stopping.hpp"
#include "sadcbo/types.hpp"

namespace sadcbo {

enum class BaselineId {
  sadcbo,
  sadcbo_fs,
  cubo,
  cbo,
  vbo,
  dbo,
  mmdbo,
  mmdcbo,
  sadbo,
  ovbo,
};

std::string baseline_name(BaselineId id);
BaselineId baseline_from_name(const std::string& name);
const std::vector<BaselineId>& all_baselines();

struct CostModel {
  double design_cost = 1.0;       // charged on every evaluation
  Eigen::VectorXd context_costs;  // one positive entry per context dim
};

struct EngineHyper {
  double eta = 0.8;    // cumulative sensitivity mass threshold
  double gamma = 0.8;  // high-output slice level for the sensitivity set
  int q_batch = 10;    // promising-design batch size (0 disables the batch)
  double beta_fs = 10.0;
  ForwardSelectRule fs_rule = ForwardSelectRule::stop_rule;
  int n_init = 5;
  int max_iterations = 0;  // optional cap on post-init iterations; 0 = none
  double init_lengthscale = 1.0;
  double init_signal_variance = 1.0;
  KernelComposition composition = KernelComposition::product;
  FitConfig fit_config;
  AcquisitionConfig acq_config;
  StoppingConfig stop_config;
};

// Independent random streams for one trial.  The first four are expected to
// be shared across baselines (paired comparisons); the rest are not.
struct SeedBundle {
  std::uint64_t context = 0;
  std::uint64_t noise = 0;
  std::uint64_t init = 0;
  std::uint64_t cost = 0;
  std::uint64_t acquisition = 0;
  std::uint64_t selection = 0;
  std::uint64_t fit = 0;
};

SeedBundle make_seed_bundle(std::uint64_t paired_seed, std::uint64_t unpaired_seed);

struct IterationRow {
  int t = 0;  // 1-based over every evaluated point, initial design included
  double cumulative_cost = 0.0;
  double step_cost = 0.0;
  double y_best = 0.0;
  int phase = 0;  // 0 observational, 1 interventional
  std::uint64_t selected_mask = 0;
  double delta_r_bound = std::numeric_limits<double>::quiet_NaN();
  double s_threshold = std::numeric_limits<double>::quiet_NaN();
  // In-memory diagnostics, not part of the CSV contract.
  Eigen::VectorXd sensitivity_scores;
  Eigen::VectorXd drawn_context;
  int selected_count = 0;
};

struct TrialResult {
  std::vector<IterationRow> rows;
  int switch_iteration = -1;  // t of the first interventional row, -1 if none
  double switch_cost_fraction = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;  // identifying seed recorded by the caller
  BaselineId baseline = BaselineId::sadcbo;
  Dataset dataset{0, 0};  // final design/context/output history
};

// Runs one seeded trial of the given method until the budget cannot cover
// another step (or max_iterations is reached).
TrialResult run_baseline(BaselineId baseline, const Problem& problem,
                         const CostModel& costs, const EngineHyper& hyper,
                         double budget, const SeedBundle& seeds);

TrialResult run_sadcbo(const Problem& problem, const CostModel& costs,
                       const EngineHyper& hyper, double budget,
                       const SeedBundle& seeds);

TrialResult run_sadcbo_fs(const Problem& problem, const CostModel& costs,
                          const EngineHyper& hyper, double budget,
                          const SeedBundle& seeds);

struct AggregateSummary {
  Eigen::VectorXd cost_grid;
  Eigen::VectorXd mean_best;  // best value interpolated onto the grid
  Eigen::VectorXd std_best;
  Eigen::MatrixXd inclusion;            // (max t) x contexts selection rate
  std::vector<int> inclusion_counts;    // trials contributing at each t
  std::vector<int> switch_iterations;   // per trial, -1 when no switch
  std::vector<double> switch_fractions; // per trial, NaN when no switch
};

AggregateSummary aggregate(const std::vector<TrialResult>& results,
                           const Eigen::VectorXd& cost_grid);

}  // namespace sadcbo
