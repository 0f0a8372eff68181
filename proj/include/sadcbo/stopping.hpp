#pragma once

#include <Eigen/Core>

namespace sadcbo {

enum class Phase { observational, interventional };

enum class KappaRule {
  // Constant sequence sqrt(2 * ln(1/delta)), independent of the iteration.
  constant_sqrt_2log,
};

struct StoppingConfig {
  double delta = 0.1;
  KappaRule kappa_rule = KappaRule::constant_sqrt_2log;
  double v_eps = 1e-9;
  // When true, the threshold reads the noise parameter as a standard
  // deviation instead of a variance.
  bool noise_as_std = false;
};

// Confidence width kappa_{delta,t}; t is accepted so alternative rules can
// depend on the iteration, the default rule ignores it.
double kappa_value(const StoppingConfig& config, int t);

// Posterior summaries the switch decision needs, collected from the models at
// iterations t-1 and t.  "prev"/"curr" name the model; "at_prev"/"at_curr"
// name the incumbent the quantity is evaluated at.
struct StoppingState {
  Eigen::VectorXd incumbent_prev;   // dataset argmax before the newest point
  Eigen::VectorXd incumbent_curr;   // dataset argmax including it
  double mu_prev_at_prev = 0.0;     // previous model's mean at its incumbent
  double mu_curr_at_curr = 0.0;     // current model's mean at the new incumbent
  double var_curr_at_prev = 0.0;    // current model's variance at the old incumbent
  double var_curr_at_curr = 0.0;    // current model's variance at the new incumbent
  double cov_curr_pair = 0.0;       // current model's covariance between both
  Eigen::VectorXd last_query;       // the point evaluated at iteration t
  double var_prevmodel_at_incumbent = 0.0;  // previous model at the new incumbent
  double var_prevmodel_at_query = 0.0;      // previous model at the queried point
  double kl_successive = 0.0;  // KL between successive posteriors on D_t inputs
  Phase phase = Phase::observational;
};

// Upper bound on the expected change in minimum simple regret between
// iterations: the Gaussian positive-part mean of the incumbent-value
// difference, plus |delta mu*|, plus kappa * sqrt(KL/2).  Throws
// std::runtime_error when the variance of the incumbent difference is
// negative beyond rounding (-1e-10), which indicates inconsistent inputs.
double regret_diff_bound(const StoppingState& state, double kappa,
                         double v_eps = 1e-9);

// Switch threshold s_t built from the previous model's variances at the new
// incumbent and at the queried point.  sigma2_noise is the observation noise
// variance; config.noise_as_std selects the std-deviation reading.
double switch_threshold(const StoppingState& state, const StoppingConfig& config,
                        double kappa, double sigma2_noise);

// True once the bound drops to or below the threshold.  The decision is a
// one-way latch: a state already in the interventional phase stays switched.
bool should_switch(const StoppingState& state, const StoppingConfig& config,
                   int t, double sigma2_noise);

}  // namespace sadcbo
