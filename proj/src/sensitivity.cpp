#include "sadcbo/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sadcbo {

FcDataset assemble_fc_dataset(const Dataset& data, double gamma,
                              const std::vector<Eigen::VectorXd>& batch_designs,
                              const Eigen::VectorXd& current_context) {
  if (gamma < 0.0 || gamma > 1.0) {
    throw std::invalid_argument("assemble_fc_dataset: gamma must lie in [0, 1]");
  }
  if (data.size() == 0) throw std::invalid_argument("assemble_fc_dataset: empty dataset");
  if (current_context.size() != data.context_dim) {
    throw std::invalid_argument("assemble_fc_dataset: context width mismatch");
  }
  const double y_best = data.best_value();
  std::vector<Eigen::Index> keep;
  if (y_best > 0.0) {
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      if (data.y[i] / y_best >= gamma) keep.push_back(i);
    }
  } else {
    // Degenerate scaling: the ratio test is meaningless, fall back to the top
    // ceil((1-gamma)*n) points by value.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return data.y[a] > data.y[b]; });
    const auto count = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(
               std::ceil((1.0 - gamma) * static_cast<double>(data.size()))));
    keep.assign(order.begin(), order.begin() + std::min<Eigen::Index>(count, data.size()));
    std::sort(keep.begin(), keep.end());
  }

  FcDataset out;
  out.gamma_members = static_cast<Eigen::Index>(keep.size());
  out.batch_members = static_cast<Eigen::Index>(batch_designs.size());
  out.points.resize(out.gamma_members + out.batch_members, data.width());
  Eigen::Index row = 0;
  for (Eigen::Index i : keep) out.points.row(row++) = data.X.row(i);
  for (const Eigen::VectorXd& design : batch_designs) {
    if (design.size() != data.design_dim) {
      throw std::invalid_argument("assemble_fc_dataset: batch design width mismatch");
    }
    out.points.row(row).head(data.design_dim) = design.transpose();
    out.points.row(row).tail(data.context_dim) = current_context.transpose();
    ++row;
  }
  return out;
}

double fc_relevance(const GpModel& model, const Eigen::VectorXd& point, int j,
                    bool perturb_to_mean, const Eigen::VectorXd* context_means) {
  const int c = static_cast<int>(model.active_columns().size()) - model.design_columns();
  if (j < 0 || j >= c) throw std::invalid_argument("fc_relevance: context index out of range");
  const Eigen::Index col =
      model.active_columns()[static_cast<std::size_t>(model.design_columns() + j)];
  Eigen::VectorXd perturbed = point;
  perturbed[col] = perturb_to_mean && context_means != nullptr ? (*context_means)[j] : 0.0;
  const auto [mean_p, var_p] = model.predictive(point);
  const auto [mean_q, var_q] = model.predictive(perturbed);
  return kl_univariate(mean_p, var_p, mean_q, var_q);
}

Eigen::VectorXd fc_scores(const GpModel& model, const FcDataset& fc_dataset,
                          bool perturb_to_mean, const Eigen::VectorXd* context_means) {
  const int c = static_cast<int>(model.active_columns().size()) - model.design_columns();
  if (c < 1) throw std::invalid_argument("fc_scores: model has no context columns");
  const Eigen::Index n = fc_dataset.points.rows();
  if (n == 0) throw std::invalid_argument("fc_scores: empty sensitivity dataset");
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd row(c);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      row[j] = fc_relevance(model, fc_dataset.points.row(i), j, perturb_to_mean,
                            context_means);
    }
    const double total = row.sum();
    if (total > 0.0) {
      scores += row / total;
    } else {
      scores.array() += 1.0 / c;  // degenerate point: uniform share
    }
  }
  return scores / static_cast<double>(n);
}

Eigen::VectorXd cost_weighted_scores(const Eigen::VectorXd& scores,
                                     const Eigen::VectorXd& costs) {
  if (scores.size() != costs.size()) {
    throw std::invalid_argument("cost_weighted_scores: size mismatch");
  }
  if ((costs.array() <= 0.0).any()) {
    throw std::invalid_argument("cost_weighted_scores: costs must be positive");
  }
  return scores.cwiseQuotient(costs);
}

std::vector<int> ranking_of(const Eigen::VectorXd& key) {
  std::vector<int> order(static_cast<std::size_t>(key.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return key[a] > key[b]; });
  return order;
}

std::vector<int> select_by_cumulative_threshold(const Eigen::VectorXd& raw_scores,
                                                const std::vector<int>& ranking,
                                                double eta) {
  if (eta < 0.0 || eta >= 1.0) {
    throw std::invalid_argument("select_by_cumulative_threshold: eta must lie in [0, 1)");
  }
  std::vector<int> selected;
  double mass = 0.0;
  for (int j : ranking) {
    selected.push_back(j);
    mass += raw_scores[j];
    if (mass > eta) return selected;
  }
  return selected;  // numerically short of eta: everything selected
}

Eigen::VectorXd normalize_scores(const Eigen::VectorXd& scores) {
  if (scores.size() == 0) return scores;
  if ((scores.array() < 0.0).any()) {
    throw std::invalid_argument("normalize_scores: scores must be nonnegative");
  }
  const double total = scores.sum();
  if (total <= 0.0) {
    return Eigen::VectorXd::Constant(scores.size(), 1.0 / static_cast<double>(scores.size()));
  }
  return scores / total;
}

double hsic_relevance(const Dataset& data, double gamma, int j) {
  const Eigen::Index n = data.size();
  if (n < 2) throw std::invalid_argument("hsic_relevance: need at least 2 points");
  if (j < 0 || j >= data.context_dim) {
    throw std::invalid_argument("hsic_relevance: context index out of range");
  }
  const Eigen::VectorXd z = data.X.col(data.design_dim + j);

  // Level-set indicator, with the same degenerate-scaling fallback as the
  // sensitivity dataset assembly.
  Eigen::VectorXd label = Eigen::VectorXd::Zero(n);
  const double y_best = data.best_value();
  if (y_best > 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) label[i] = data.y[i] / y_best >= gamma ? 1.0 : 0.0;
  } else {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return data.y[a] > data.y[b]; });
    const auto count = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::ceil((1.0 - gamma) * static_cast<double>(n))));
    for (Eigen::Index i = 0; i < std::min(count, n); ++i) label[order[static_cast<std::size_t>(i)]] = 1.0;
  }
  if ((label.array() == label[0]).all()) return 0.0;  // constant indicator

  // Median heuristic for the context kernel lengthscale.
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double dist = std::abs(z[a] - z[b]);
      if (dist > 0.0) dists.push_back(dist);
    }
  }
  if (dists.empty()) return 0.0;  // constant context column
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2),
                   dists.end());
  const double ell = dists[dists.size() / 2];

  Eigen::MatrixXd K(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double dist = (z[a] - z[b]) / ell;
      K(a, b) = std::exp(-0.5 * dist * dist);
    }
  }
  const Eigen::MatrixXd L = label * label.transpose();

  // (1/n^2) tr(K H L H) via double centering of K.
  const Eigen::VectorXd row_mean = K.rowwise().mean();
  const double total_mean = K.mean();
  Eigen::MatrixXd Kc = K;
  Kc.colwise() -= row_mean;
  Kc.rowwise() -= row_mean.transpose();
  Kc.array() += total_mean;
  const double value = (Kc.array() * L.array()).sum() / static_cast<double>(n * n);
  return std::max(value, 0.0);
}

std::vector<int> forward_select(const Dataset& data,
                                const std::vector<int>& sorted_context_indices,
                                double beta_fs, const KernelSpec& base_spec,
                                const FitConfig& fit_config, ForwardSelectRule rule) {
  if (beta_fs <= 0.0) throw std::invalid_argument("forward_select: beta_fs must be positive");
  const int c = static_cast<int>(sorted_context_indices.size());

  const auto negative_mll_with_prefix = [&](int prefix_len) -> double {
    std::vector<Eigen::Index> active;
    for (int i = 0; i < data.design_dim; ++i) active.push_back(i);
    for (int i = 0; i < prefix_len; ++i) {
      active.push_back(data.design_dim + sorted_context_indices[static_cast<std::size_t>(i)]);
    }
    std::sort(active.begin() + data.design_dim, active.end());
    KernelSpec spec = base_spec;
    spec.lengthscales = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(active.size()));
    try {
      const GpModel model =
          GpModel::fit(spec, active, data.design_dim, data.X, data.y, fit_config);
      return -model.log_marginal_likelihood();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  if (c == 0) return {};
  std::vector<double> L(static_cast<std::size_t>(c) + 1);
  L[0] = negative_mll_with_prefix(0);
  int j_star = c;
  if (rule == ForwardSelectRule::verbatim_break) {
    for (int j = 1; j <= c; ++j) {
      L[static_cast<std::size_t>(j)] = negative_mll_with_prefix(j);
      const bool improved = L[static_cast<std::size_t>(j)] < L[static_cast<std::size_t>(j - 1)];
      if (j == 1) {
        if (improved) {
          j_star = 1;
          break;
        }
        continue;  // the two-step slack needs L_{j-2}, undefined at j = 1
      }
      const double step = L[static_cast<std::size_t>(j)] - L[static_cast<std::size_t>(j - 1)];
      const double prev_step =
          L[static_cast<std::size_t>(j - 1)] - L[static_cast<std::size_t>(j - 2)];
      if (improved || step < prev_step / beta_fs) {
        j_star = j;
        break;
      }
    }
  } else {
    // Keep extending the prefix while the comparison passes; the first failing
    // stage j settles j* = j - 1.
    j_star = c;
    for (int j = 1; j <= c; ++j) {
      L[static_cast<std::size_t>(j)] = negative_mll_with_prefix(j);
      const bool improved = L[static_cast<std::size_t>(j)] < L[static_cast<std::size_t>(j - 1)];
      bool keep_going = improved;
      if (j >= 2) {
        const double step = L[static_cast<std::size_t>(j)] - L[static_cast<std::size_t>(j - 1)];
        const double prev_step =
            L[static_cast<std::size_t>(j - 1)] - L[static_cast<std::size_t>(j - 2)];
        keep_going = improved || step < prev_step / beta_fs;
      }
      if (!keep_going) {
        j_star = j - 1;
        break;
      }
    }
  }
  return {sorted_context_indices.begin(), sorted_context_indices.begin() + j_star};
}

}  // namespace sadcbo
