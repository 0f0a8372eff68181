#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sadcbo/gp.hpp"
#include "sadcbo/types.hpp"

namespace sadcbo {

// Union of the high-value slice of the dataset and a promising design batch
// paired with the current context; rows are full-width input points.
struct FcDataset {
  Eigen::MatrixXd points;
  Eigen::Index gamma_members = 0;
  Eigen::Index batch_members = 0;
};

enum class SensitivityMethod { fc, hsic };

struct SensitivityReport {
  Eigen::VectorXd raw_scores;     // normalized shares, sum to 1
  Eigen::VectorXd cost_weighted;  // raw / cost
  std::vector<int> ranking;       // context indices, descending by ranking key
  std::vector<int> selected;      // J_eta (in ranking order)
  SensitivityMethod method = SensitivityMethod::fc;
};

// D^gamma: points with y / y_best >= gamma (or the top ceil((1-gamma)*n)
// points when the scaled maximum is not positive); D^Q: batch designs paired
// with current_context.
FcDataset assemble_fc_dataset(const Dataset& data, double gamma,
                              const std::vector<Eigen::VectorXd>& batch_designs,
                              const Eigen::VectorXd& current_context);

// KL shift of the noisy predictive distribution at the point when context
// coordinate j is set to zero. The model must span all context columns.
double fc_relevance(const GpModel& model, const Eigen::VectorXd& point, int j,
                    bool perturb_to_mean = false,
                    const Eigen::VectorXd* context_means = nullptr);

// Per-point normalized relevance shares averaged over the dataset; sums to 1.
// A point whose relevance vanishes for every context contributes a uniform
// share.
Eigen::VectorXd fc_scores(const GpModel& model, const FcDataset& fc_dataset,
                          bool perturb_to_mean = false,
                          const Eigen::VectorXd* context_means = nullptr);

Eigen::VectorXd cost_weighted_scores(const Eigen::VectorXd& scores,
                                     const Eigen::VectorXd& costs);

// Context indices sorted descending by key; ties break toward lower index.
std::vector<int> ranking_of(const Eigen::VectorXd& key);

// Smallest ranking prefix whose raw-score sum strictly exceeds eta.
std::vector<int> select_by_cumulative_threshold(const Eigen::VectorXd& raw_scores,
                                                const std::vector<int>& ranking,
                                                double eta);

// Normalizes nonnegative scores to shares summing to 1 (uniform when all
// scores vanish).
Eigen::VectorXd normalize_scores(const Eigen::VectorXd& scores);

// Empirical HSIC (biased V-statistic) between context column j and the
// indicator of the high-value level set. RBF kernel with median-heuristic
// lengthscale on the context; linear kernel on the indicator.
double hsic_relevance(const Dataset& data, double gamma, int j);

enum class ForwardSelectRule {
  // Keep adding contexts while the nested negative MLL keeps passing the
  // comparison; stop at the last passing prefix (can select none).
  stop_rule,
  // Break with j* = j at the first passing comparison, exactly as the
  // acceptance listing prints it (never selects the empty set).
  verbatim_break,
};

// Nested-GP forward selection over sorted_context_indices; returns the chosen
// prefix. A GP fit failure at stage j makes that stage's negative MLL +inf.
std::vector<int> forward_select(const Dataset& data,
                                const std::vector<int>& sorted_context_indices,
                                double beta_fs, const KernelSpec& base_spec,
                                const FitConfig& fit_config,
                                ForwardSelectRule rule = ForwardSelectRule::stop_rule);

}  // namespace sadcbo
