#include "sadcbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "sadcbo/quasirandom.hpp"

namespace sadcbo {
namespace {

constexpr double kMinPairDistance = 1e-6;

std::vector<Eigen::Index> design_block_columns(const GpModel& model) {
  const auto& active = model.active_columns();
  return {active.begin(), active.begin() + model.design_columns()};
}

// Candidate scan + coordinate-wise pattern refinement of an arbitrary
// objective over the unit cube restricted to free_cols.
Eigen::VectorXd scan_and_refine(const Eigen::VectorXd& fixed_point,
                                const std::vector<Eigen::Index>& free_cols,
                                const AcquisitionConfig& config, Rng& rng,
                                const std::function<double(const Eigen::VectorXd&)>& value) {
  if (free_cols.empty()) {
    throw std::invalid_argument("maximize_ucb: no free dimensions to optimize");
  }
  SobolSequence sobol(static_cast<int>(free_cols.size()), rng.next_u64());
  const int n_cand = std::max(config.raw_candidates, config.refine_restarts);
  Eigen::VectorXd best_point = fixed_point;
  double best_value = -std::numeric_limits<double>::infinity();

  // Keep the refine_restarts best candidates, preferring earlier indices.
  struct Seed {
    double value;
    int index;
    Eigen::VectorXd point;
  };
  std::vector<Seed> seeds;
  Eigen::VectorXd point = fixed_point;
  for (int i = 0; i < n_cand; ++i) {
    const Eigen::VectorXd u = sobol.next();
    for (std::size_t d = 0; d < free_cols.size(); ++d) point[free_cols[d]] = u[static_cast<Eigen::Index>(d)];
    const double v = value(point);
    seeds.push_back({v, i, point});
  }
  std::stable_sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) {
    return a.value > b.value;
  });
  seeds.resize(static_cast<std::size_t>(
      std::min<int>(config.refine_restarts, static_cast<int>(seeds.size()))));

  for (const Seed& seed : seeds) {
    Eigen::VectorXd current = seed.point;
    double current_value = seed.value;
    double step = 0.25;
    for (int it = 0; it < config.refine_steps; ++it) {
      for (Eigen::Index col : free_cols) {
        for (double sign : {+1.0, -1.0}) {
          Eigen::VectorXd trial = current;
          trial[col] = std::clamp(trial[col] + sign * step, 0.0, 1.0);
          if (trial[col] == current[col]) continue;
          const double v = value(trial);
          if (v > current_value) {
            current = trial;
            current_value = v;
          }
        }
      }
      step *= 0.8;
    }
    if (current_value > best_value) {
      best_value = current_value;
      best_point = current;
    }
  }
  return best_point;
}

}  // namespace

double ucb_value(const GpModel& model, const Eigen::VectorXd& point, double beta) {
  if (beta < 0.0) throw std::invalid_argument("ucb_value: beta must be nonnegative");
  double mean = 0.0, variance = 0.0;
  model.latent(point, mean, variance);
  return mean + std::sqrt(beta) * std::sqrt(std::max(variance, 0.0));
}

Eigen::VectorXd maximize_ucb(const GpModel& model, const Eigen::VectorXd& fixed_point,
                             const std::vector<Eigen::Index>& free_context_columns,
                             const AcquisitionConfig& config, Rng& rng) {
  std::vector<Eigen::Index> free_cols = design_block_columns(model);
  for (Eigen::Index col : free_context_columns) {
    if (col < 0 || col >= fixed_point.size()) {
      throw std::invalid_argument("maximize_ucb: free context column out of range");
    }
    free_cols.push_back(col);
  }
  std::sort(free_cols.begin(), free_cols.end());
  free_cols.erase(std::unique(free_cols.begin(), free_cols.end()), free_cols.end());
  return scan_and_refine(fixed_point, free_cols, config, rng,
                         [&](const Eigen::VectorXd& p) {
                           return ucb_value(model, p, config.beta);
                         });
}

std::vector<Eigen::VectorXd> select_batch(const GpModel& model,
                                          const Eigen::VectorXd& fixed_point, int q,
                                          const AcquisitionConfig& config, Rng& rng,
                                          std::vector<double>* step_values) {
  if (q < 1) throw std::invalid_argument("select_batch: q must be >= 1");
  if (config.mc_samples < 64) {
    throw std::invalid_argument("select_batch: mc_samples must be >= 64 for batches");
  }
  const std::vector<Eigen::Index> design_cols = design_block_columns(model);
  const std::size_t d = design_cols.size();

  // Candidate pool over the design block (contexts frozen at fixed_point).
  SobolSequence sobol(static_cast<int>(d), rng.next_u64());
  const int n_cand = std::max(config.batch_candidates, q + 1);
  Eigen::MatrixXd pool(n_cand, fixed_point.size());
  for (int i = 0; i < n_cand; ++i) {
    pool.row(i) = fixed_point.transpose();
    const Eigen::VectorXd u = sobol.next();
    for (std::size_t k = 0; k < d; ++k) pool(i, design_cols[k]) = u[static_cast<Eigen::Index>(k)];
  }

  // Latent posterior moments of the whole pool, organized so that the
  // cross-covariance between any candidate pair is cheap.
  const GaussianMoments pool_moments = model.posterior(pool);

  // Fixed base samples: one row per Monte-Carlo sample, q columns.
  Eigen::MatrixXd z(config.mc_samples, q);
  for (int m = 0; m < config.mc_samples; ++m) {
    for (int j = 0; j < q; ++j) z(m, j) = rng.normal();
  }
  const double width = std::sqrt(config.beta * M_PI / 2.0);

  std::vector<int> chosen;
  std::vector<Eigen::VectorXd> batch;
  Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(q, q);  // growing lower factor
  // best_under[m] = the batch statistic of the already selected points under
  // sample m; the estimate for S + {p} is mean_m max(best_under[m], value_p,m).
  Eigen::VectorXd best_under = Eigen::VectorXd::Constant(
      config.mc_samples, -std::numeric_limits<double>::infinity());
  std::vector<char> used(static_cast<std::size_t>(n_cand), 0);

  for (int round = 0; round < q; ++round) {
    const int s = round;  // selected so far
    int best_index = -1;
    double best_estimate = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_row(s + 1);
    for (int c = 0; c < n_cand; ++c) {
      if (used[static_cast<std::size_t>(c)]) continue;
      // Extend the Cholesky factor by this candidate.
      Eigen::VectorXd cross(s);
      for (int j = 0; j < s; ++j) cross[j] = pool_moments.covariance(c, chosen[static_cast<std::size_t>(j)]);
      Eigen::VectorXd r(s + 1);
      if (s > 0) {
        r.head(s) = chol.topLeftCorner(s, s)
                        .triangularView<Eigen::Lower>()
                        .solve(cross);
      }
      const double diag_sq = pool_moments.covariance(c, c) - r.head(s).squaredNorm();
      r[s] = std::sqrt(std::max(diag_sq, 0.0));
      const double mu = pool_moments.mean[c];
      double total = 0.0;
      for (int m = 0; m < config.mc_samples; ++m) {
        double dot = r[s] * z(m, s);
        for (int j = 0; j < s; ++j) dot += r[j] * z(m, j);
        total += std::max(best_under[m], mu + width * std::abs(dot));
      }
      const double estimate = total / config.mc_samples;
      if (estimate > best_estimate) {
        best_estimate = estimate;
        best_index = c;
        best_row = r;
      }
    }
    if (best_index < 0) throw std::runtime_error("select_batch: candidate pool exhausted");
    used[static_cast<std::size_t>(best_index)] = 1;
    chosen.push_back(best_index);
    chol.row(s).head(s + 1) = best_row.transpose();
    const double mu = pool_moments.mean[best_index];
    for (int m = 0; m < config.mc_samples; ++m) {
      double dot = 0.0;
      for (int j = 0; j <= s; ++j) dot += best_row[j] * z(m, j);
      best_under[m] = std::max(best_under[m], mu + width * std::abs(dot));
    }
    if (step_values != nullptr) step_values->push_back(best_estimate);

    Eigen::VectorXd design(d);
    for (std::size_t k = 0; k < d; ++k) design[static_cast<Eigen::Index>(k)] = pool(best_index, design_cols[k]);
    // Nudge apart in the (unlikely) event of a near-duplicate design point.
    for (const Eigen::VectorXd& prev : batch) {
      if ((design - prev).lpNorm<Eigen::Infinity>() < kMinPairDistance) {
        for (Eigen::Index k = 0; k < design.size(); ++k) {
          design[k] = std::clamp(design[k] + kMinPairDistance * static_cast<double>(k + 1),
                                 0.0, 1.0);
        }
      }
    }
    batch.push_back(design);
  }
  return batch;
}

}  // namespace sadcbo
