#include "sadcbo/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sadcbo {

namespace {

double standard_normal_pdf(double x) {
  static const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

}  // namespace

double kappa_value(const StoppingConfig& config, int /*t*/) {
  if (!(config.delta > 0.0 && config.delta < 1.0)) {
    throw std::invalid_argument("kappa_value: delta must lie in (0,1)");
  }
  switch (config.kappa_rule) {
    case KappaRule::constant_sqrt_2log:
      return std::sqrt(2.0 * std::log(1.0 / config.delta));
  }
  throw std::invalid_argument("kappa_value: unknown rule");
}

double regret_diff_bound(const StoppingState& state, double kappa, double v_eps) {
  if (kappa < 0.0) {
    throw std::invalid_argument("regret_diff_bound: kappa must be nonnegative");
  }
  const double delta_mu = state.mu_prev_at_prev - state.mu_curr_at_curr;

  // Variance of the incumbent-value difference under the current posterior.
  double radicand =
      state.var_curr_at_curr - 2.0 * state.cov_curr_pair + state.var_curr_at_prev;
  if (radicand < -1e-10) {
    throw std::runtime_error(
        "regret_diff_bound: negative variance for the incumbent difference; "
        "posterior covariances are inconsistent");
  }
  radicand = std::max(radicand, 0.0);
  const double v = std::sqrt(radicand);

  // E[max(D, 0)] for D ~ N(-delta_mu, v^2); degenerates to max(-delta_mu, 0).
  double positive_part = 0.0;
  if (v < v_eps) {
    positive_part = std::max(-delta_mu, 0.0);
  } else {
    const double g = -delta_mu / v;
    positive_part = v * (standard_normal_pdf(g) + g * standard_normal_cdf(g));
  }

  const double kl = std::max(state.kl_successive, 0.0);
  return positive_part + std::abs(delta_mu) + kappa * std::sqrt(0.5 * kl);
}

double switch_threshold(const StoppingState& state, const StoppingConfig& config,
                        double kappa, double sigma2_noise) {
  if (!(config.delta > 0.0 && config.delta < 1.0)) {
    throw std::invalid_argument("switch_threshold: delta must lie in (0,1)");
  }
  if (!(sigma2_noise > 0.0)) {
    throw std::invalid_argument("switch_threshold: noise variance must be positive");
  }
  const double noise = config.noise_as_std ? std::sqrt(sigma2_noise) : sigma2_noise;
  const double numerator = (state.var_prevmodel_at_incumbent + 0.5 * kappa) *
                           state.var_prevmodel_at_query *
                           std::sqrt(-2.0 * std::log(config.delta));
  const double denominator =
      std::sqrt(noise) * (state.var_prevmodel_at_query + 1.0 / noise);
  return numerator / denominator;
}

bool should_switch(const StoppingState& state, const StoppingConfig& config,
                   int t, double sigma2_noise) {
  if (state.phase == Phase::interventional) {
    return true;  // latched
  }
  if (t < 2) {
    throw std::invalid_argument("should_switch: needs posteriors from two iterations");
  }
  const double kappa = kappa_value(config, t);
  const double bound = regret_diff_bound(state, kappa, config.v_eps);
  const double threshold = switch_threshold(state, config, kappa, sigma2_noise);
  return bound <= threshold;
}

}  // namespace sadcbo
