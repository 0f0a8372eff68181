#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sadcbo/gp.hpp"
#include "sadcbo/rng.hpp"

namespace sadcbo {

struct AcquisitionConfig {
  double beta = 4.0;         // UCB exploration weight
  int mc_samples = 128;      // fixed base samples for the batch estimate
  int raw_candidates = 1024;
  int batch_candidates = 256;  // candidate pool for greedy batch rounds
  int refine_steps = 50;
  int refine_restarts = 4;
};

// mu(point) + sqrt(beta) * latent sigma(point).
double ucb_value(const GpModel& model, const Eigen::VectorXd& point, double beta);

// Maximizes UCB over the model's design block plus the given absolute free
// context columns; every other coordinate keeps fixed_point's value. The
// search scans a digitally shifted Sobol candidate set and refines the best
// candidates by coordinate-wise pattern search; ties go to the lowest
// candidate index. Returns the full-width point.
Eigen::VectorXd maximize_ucb(const GpModel& model, const Eigen::VectorXd& fixed_point,
                             const std::vector<Eigen::Index>& free_context_columns,
                             const AcquisitionConfig& config, Rng& rng);

// Greedy sequential Monte-Carlo batch UCB over the design block with contexts
// held at fixed_point's values. Returns q design-block vectors (coordinates of
// the model's design columns, in order). step_values, when given, receives the
// batch estimate after each greedy addition.
std::vector<Eigen::VectorXd> select_batch(const GpModel& model,
                                          const Eigen::VectorXd& fixed_point, int q,
                                          const AcquisitionConfig& config, Rng& rng,
                                          std::vector<double>* step_values = nullptr);

}  // namespace sadcbo
