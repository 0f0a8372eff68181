#include "sadcbo/engine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "sadcbo/quasirandom.hpp"

namespace sadcbo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MethodTraits {
  bool uses_fc = false;             // sensitivity scores from the full GP
  bool uses_hsic = false;           // sensitivity scores from the data only
  bool uses_stopping = false;       // observational -> interventional switch
  bool force_interventional = false;
  bool select_all = false;          // intervene on every context
  bool dropout = false;             // fresh random subset each iteration
  bool oracle = false;              // fixed subset of truly relevant contexts
  bool design_only_model = false;
  bool reduced_model = false;       // refit surrogate on design + selection
  bool forward_selection = false;
  bool needs_primary = true;        // maintains a model across iterations
};

MethodTraits traits_for(BaselineId id) {
  MethodTraits t;
  switch (id) {
    case BaselineId::sadcbo:
      t.uses_fc = t.uses_stopping = t.reduced_model = true;
      return t;
    case BaselineId::sadcbo_fs:
      t.uses_fc = t.uses_stopping = t.reduced_model = t.forward_selection = true;
      return t;
    case BaselineId::sadbo:
      t.uses_fc = t.force_interventional = t.reduced_model = true;
      return t;
    case BaselineId::mmdbo:
      t.uses_hsic = t.force_interventional = t.reduced_model = true;
      t.needs_primary = false;
      return t;
    case BaselineId::mmdcbo:
      t.uses_hsic = t.uses_stopping = t.reduced_model = true;
      return t;
    case BaselineId::cubo:
      t.design_only_model = true;
      return t;
    case BaselineId::cbo:
      return t;  // all-dims model, contexts observed, never intervened
    case BaselineId::vbo:
      t.select_all = t.force_interventional = true;
      return t;
    case BaselineId::dbo:
      t.dropout = t.force_interventional = true;
      return t;
    case BaselineId::ovbo:
      t.oracle = t.force_interventional = true;
      return t;
  }
  throw std::invalid_argument("traits_for: unknown baseline");
}

}  // namespace

std::string baseline_name(BaselineId id) {
  switch (id) {
    case BaselineId::sadcbo: return "SADCBO";
    case BaselineId::sadcbo_fs: return "SADCBO-FS";
    case BaselineId::cubo: return "CUBO";
    case BaselineId::cbo: return "CBO";
    case BaselineId::vbo: return "VBO";
    case BaselineId::dbo: return "DBO";
    case BaselineId::mmdbo: return "MMDBO";
    case BaselineId::mmdcbo: return "MMDCBO";
    case BaselineId::sadbo: return "SADBO";
    case BaselineId::ovbo: return "OVBO";
  }
  throw std::invalid_argument("baseline_name: unknown id");
}

BaselineId baseline_from_name(const std::string& name) {
  // Case-insensitive, with '_' accepted for '-' so config keys stay friendly.
  const auto canonical = [](const std::string& text) {
    std::string out;
    for (char c : text) {
      out += c == '_' ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return out;
  };
  const std::string wanted = canonical(name);
  for (BaselineId id : all_baselines()) {
    if (baseline_name(id) == wanted) return id;
  }
  throw std::invalid_argument("baseline_from_name: unknown baseline '" + name + "'");
}

const std::vector<BaselineId>& all_baselines() {
  static const std::vector<BaselineId> ids = {
      BaselineId::sadcbo, BaselineId::sadcbo_fs, BaselineId::cubo,
      BaselineId::cbo,    BaselineId::vbo,       BaselineId::dbo,
      BaselineId::mmdbo,  BaselineId::mmdcbo,    BaselineId::sadbo,
      BaselineId::ovbo};
  return ids;
}

SeedBundle make_seed_bundle(std::uint64_t paired_seed, std::uint64_t unpaired_seed) {
  SeedBundle bundle;
  bundle.context = derive_seed(paired_seed, {0x63747874u});
  bundle.noise = derive_seed(paired_seed, {0x6e6f6973u});
  bundle.init = derive_seed(paired_seed, {0x696e6974u});
  bundle.cost = derive_seed(paired_seed, {0x636f7374u});
  bundle.acquisition = derive_seed(unpaired_seed, {0x61637175u});
  bundle.selection = derive_seed(unpaired_seed, {0x73656c65u});
  bundle.fit = derive_seed(unpaired_seed, {0x66697467u});
  return bundle;
}

TrialResult run_baseline(BaselineId baseline, const Problem& problem,
                         const CostModel& costs, const EngineHyper& hyper,
                         double budget, const SeedBundle& seeds) {
  const int d = problem.design_dim();
  const int c = problem.context_dim();
  if (costs.design_cost <= 0.0) {
    throw std::invalid_argument("run_baseline: design cost must be positive");
  }
  if (costs.context_costs.size() != c) {
    throw std::invalid_argument("run_baseline: need one context cost per context dim");
  }
  for (int j = 0; j < c; ++j) {
    if (costs.context_costs[j] <= 0.0) {
      throw std::invalid_argument("run_baseline: context costs must be positive");
    }
  }
  if (hyper.n_init < 1) {
    throw std::invalid_argument("run_baseline: n_init must be at least 1");
  }

  const MethodTraits traits = traits_for(baseline);
  Rng context_rng(seeds.context);
  Rng noise_rng(seeds.noise);
  Rng acq_rng(seeds.acquisition);
  Rng selection_rng(seeds.selection);
  Rng fit_rng(seeds.fit);

  TrialResult result;
  result.baseline = baseline;
  result.dataset = Dataset(d, c);
  Dataset& data = result.dataset;

  const double noise_variance = std::max(problem.spec().noise_variance, 1e-8);
  const ContextDistribution distribution = problem.spec().context_distribution;

  double remaining = budget;
  double cumulative = 0.0;
  int t = 0;
  double y_best = -std::numeric_limits<double>::infinity();

  const auto push_row = [&](double step_cost, int phase_flag, std::uint64_t mask,
                            const Eigen::VectorXd& scores, const Eigen::VectorXd& z,
                            int n_selected, double bound, double threshold) {
    IterationRow row;
    row.t = ++t;
    cumulative += step_cost;
    row.cumulative_cost = cumulative;
    row.step_cost = step_cost;
    row.y_best = y_best;
    row.phase = phase_flag;
    row.selected_mask = mask;
    row.delta_r_bound = bound;
    row.s_threshold = threshold;
    row.sensitivity_scores = scores;
    row.drawn_context = z;
    row.selected_count = n_selected;
    result.rows.push_back(std::move(row));
  };

  // Initial dataset: quasi-random designs paired with drawn contexts, each
  // charged the design cost; stop early if the budget cannot cover them.
  SobolSequence init_sequence(d, seeds.init);
  for (int i = 0; i < hyper.n_init; ++i) {
    if (remaining < costs.design_cost) break;
    const Eigen::VectorXd x = init_sequence.next();
    const Eigen::VectorXd z = sample_context(distribution, c, context_rng);
    Eigen::VectorXd point(d + c);
    point.head(d) = x;
    point.tail(c) = z;
    const double y = problem.evaluate(x, z, noise_rng);
    data.append(point, y);
    y_best = std::max(y_best, y);
    remaining -= costs.design_cost;
    push_row(costs.design_cost, 0, 0, Eigen::VectorXd(), z, 0, kNaN, kNaN);
  }
  if (data.size() == 0) return result;

  std::vector<Eigen::Index> all_columns(static_cast<std::size_t>(d + c));
  std::iota(all_columns.begin(), all_columns.end(), 0);
  std::vector<Eigen::Index> design_columns(static_cast<std::size_t>(d));
  std::iota(design_columns.begin(), design_columns.end(), 0);
  std::vector<int> oracle_set(static_cast<std::size_t>(problem.num_relevant_contexts()));
  std::iota(oracle_set.begin(), oracle_set.end(), 0);

  const auto columns_for = [&](const std::vector<int>& selected) {
    std::vector<Eigen::Index> cols = design_columns;
    std::vector<int> sorted = selected;
    std::sort(sorted.begin(), sorted.end());
    for (int j : sorted) cols.push_back(d + j);
    return cols;
  };

  const auto fit_on = [&](const std::vector<Eigen::Index>& cols) {
    KernelSpec spec;
    spec.composition = hyper.composition;
    spec.lengthscales = Eigen::VectorXd::Constant(
        static_cast<Eigen::Index>(cols.size()), hyper.init_lengthscale);
    spec.signal_variance = hyper.init_signal_variance;
    spec.noise_variance = noise_variance;
    FitConfig fit_config = hyper.fit_config;
    fit_config.seed = fit_rng.next_u64();
    return GpModel::fit(spec, cols, d, data.X, data.y, fit_config);
  };

  const std::vector<Eigen::Index> scope_columns =
      traits.design_only_model ? design_columns
      : traits.oracle          ? columns_for(oracle_set)
                               : all_columns;

  GpModel primary;
  if (traits.needs_primary) primary = fit_on(scope_columns);

  Phase phase =
      traits.force_interventional ? Phase::interventional : Phase::observational;
  if (traits.force_interventional) {
    result.switch_iteration = t + 1;
    result.switch_cost_fraction = cumulative / budget;
  }

  const double min_context_cost = c > 0 ? costs.context_costs.minCoeff() : 0.0;
  double guard = costs.design_cost;
  if (traits.select_all) {
    guard += costs.context_costs.sum();
  } else if (traits.oracle) {
    for (int j : oracle_set) guard += costs.context_costs[j];
  } else if ((traits.uses_fc || traits.uses_hsic || traits.dropout) && c > 0) {
    guard += min_context_cost;
  }

  int iterations = 0;
  while (remaining >= guard &&
         (hyper.max_iterations == 0 || iterations < hyper.max_iterations)) {
    ++iterations;
    const Eigen::VectorXd z_t = sample_context(distribution, c, context_rng);

    // --- context selection ---
    Eigen::VectorXd shares;
    std::vector<int> selected;
    if ((traits.uses_fc || traits.uses_hsic) && c > 0) {
      if (traits.uses_fc) {
        std::vector<Eigen::VectorXd> batch;
        if (hyper.q_batch > 0) {
          Eigen::VectorXd anchor = Eigen::VectorXd::Constant(d + c, 0.5);
          anchor.tail(c) = z_t;
          batch = select_batch(primary, anchor, hyper.q_batch, hyper.acq_config,
                               acq_rng);
        }
        const FcDataset fc = assemble_fc_dataset(data, hyper.gamma, batch, z_t);
        shares = fc_scores(primary, fc);
      } else {
        Eigen::VectorXd raw(c);
        for (int j = 0; j < c; ++j) raw[j] = hsic_relevance(data, hyper.gamma, j);
        shares = normalize_scores(raw);
      }
      const Eigen::VectorXd key =
          phase == Phase::interventional
              ? cost_weighted_scores(shares, costs.context_costs)
              : shares;
      const std::vector<int> ranking = ranking_of(key);
      if (traits.forward_selection) {
        FitConfig fs_config = hyper.fit_config;
        fs_config.restarts = 1;
        fs_config.max_iterations = std::min(hyper.fit_config.max_iterations, 25);
        fs_config.seed = fit_rng.next_u64();
        KernelSpec fs_spec;
        fs_spec.composition = hyper.composition;
        fs_spec.signal_variance = hyper.init_signal_variance;
        fs_spec.noise_variance = noise_variance;
        selected = forward_select(data, ranking, hyper.beta_fs, fs_spec,
                                  fs_config, hyper.fs_rule);
      } else {
        selected = select_by_cumulative_threshold(shares, ranking, hyper.eta);
      }
    } else if (traits.select_all) {
      selected.resize(static_cast<std::size_t>(c));
      std::iota(selected.begin(), selected.end(), 0);
    } else if (traits.dropout) {
      if (c <= 5) {
        selected.resize(static_cast<std::size_t>(c));
        std::iota(selected.begin(), selected.end(), 0);
      } else {
        std::vector<int> pool(static_cast<std::size_t>(c));
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < 5; ++i) {
          const int k =
              i + static_cast<int>(selection_rng.uniform_int(
                      static_cast<std::uint64_t>(c - i)));
          std::swap(pool[static_cast<std::size_t>(i)],
                    pool[static_cast<std::size_t>(k)]);
        }
        selected.assign(pool.begin(), pool.begin() + 5);
      }
    } else if (traits.oracle) {
      selected = oracle_set;
    }

    // --- step cost, trimming the intervention set to the budget ---
    double step_cost = costs.design_cost;
    if (phase == Phase::interventional) {
      const auto subset_cost = [&] {
        double s = costs.design_cost;
        for (int j : selected) s += costs.context_costs[j];
        return s;
      };
      step_cost = subset_cost();
      while (step_cost > remaining && !selected.empty()) {
        if (traits.dropout) {
          selected.erase(std::max_element(
              selected.begin(), selected.end(), [&](int a, int b) {
                return costs.context_costs[a] < costs.context_costs[b];
              }));
        } else {
          selected.pop_back();  // lowest-ranked selected context
        }
        step_cost = subset_cost();
      }
    }

    // --- surrogate and acquisition ---
    GpModel reduced;
    const GpModel* acq_model = &primary;
    if (traits.reduced_model) {
      reduced = fit_on(columns_for(selected));
      acq_model = &reduced;
    }
    Eigen::VectorXd fixed = Eigen::VectorXd::Constant(d + c, 0.5);
    fixed.tail(c) = z_t;
    std::vector<Eigen::Index> free_columns;
    if (phase == Phase::interventional) {
      std::vector<int> sorted = selected;
      std::sort(sorted.begin(), sorted.end());
      for (int j : sorted) free_columns.push_back(d + j);
    }
    const Eigen::VectorXd point =
        maximize_ucb(*acq_model, fixed, free_columns, hyper.acq_config, acq_rng);
    const Eigen::VectorXd x_new = point.head(d);
    const Eigen::VectorXd z_new = point.tail(c);
    const double y = problem.evaluate(x_new, z_new, noise_rng);
    data.append(point, y);
    y_best = std::max(y_best, y);
    remaining -= step_cost;

    // --- refit and (while observational) evaluate the switch criterion ---
    double bound = kNaN;
    double threshold = kNaN;
    const int phase_flag = phase == Phase::interventional ? 1 : 0;
    if (traits.needs_primary) {
      GpModel updated = fit_on(scope_columns);
      if (traits.uses_stopping && phase == Phase::observational) {
        const Eigen::Index n = data.size();
        Eigen::Index curr_idx = 0;
        data.y.maxCoeff(&curr_idx);
        Eigen::Index prev_idx = 0;
        data.y.head(n - 1).maxCoeff(&prev_idx);

        StoppingState state;
        state.incumbent_curr = data.X.row(curr_idx);
        state.incumbent_prev = data.X.row(prev_idx);
        double mean = 0.0;
        double variance = 0.0;
        primary.latent(state.incumbent_prev, mean, variance);
        state.mu_prev_at_prev = mean;
        updated.latent(state.incumbent_curr, mean, variance);
        state.mu_curr_at_curr = mean;
        Eigen::MatrixXd pair(2, d + c);
        pair.row(0) = state.incumbent_curr;
        pair.row(1) = state.incumbent_prev;
        const GaussianMoments pm = updated.posterior(pair);
        state.var_curr_at_curr = pm.covariance(0, 0);
        state.var_curr_at_prev = pm.covariance(1, 1);
        state.cov_curr_pair = pm.covariance(0, 1);
        primary.latent(state.incumbent_curr, mean, variance);
        state.var_prevmodel_at_incumbent = variance;
        state.last_query = point;
        primary.latent(point, mean, variance);
        state.var_prevmodel_at_query = variance;
        state.kl_successive =
            kl_multivariate(updated.posterior(data.X), primary.posterior(data.X));
        state.phase = Phase::observational;

        const double kappa = kappa_value(hyper.stop_config, iterations);
        bound = regret_diff_bound(state, kappa, hyper.stop_config.v_eps);
        threshold =
            switch_threshold(state, hyper.stop_config, kappa, noise_variance);
        if (bound <= threshold) {
          phase = Phase::interventional;  // one-way latch
          result.switch_iteration = t + 1;
          result.switch_cost_fraction = (cumulative + step_cost) / budget;
        }
      }
      primary = std::move(updated);
    }

    const std::uint64_t mask = selected.empty() ? 0 : context_mask(selected);
    push_row(step_cost, phase_flag, mask, shares, z_t,
             static_cast<int>(selected.size()), bound, threshold);
  }

  return result;
}

TrialResult run_sadcbo(const Problem& problem, const CostModel& costs,
                       const EngineHyper& hyper, double budget,
                       const SeedBundle& seeds) {
  return run_baseline(BaselineId::sadcbo, problem, costs, hyper, budget, seeds);
}

TrialResult run_sadcbo_fs(const Problem& problem, const CostModel& costs,
                          const EngineHyper& hyper, double budget,
                          const SeedBundle& seeds) {
  return run_baseline(BaselineId::sadcbo_fs, problem, costs, hyper, budget, seeds);
}

AggregateSummary aggregate(const std::vector<TrialResult>& results,
                           const Eigen::VectorXd& cost_grid) {
  if (results.empty()) throw std::invalid_argument("aggregate: no results");
  for (const TrialResult& r : results) {
    if (r.rows.empty()) throw std::invalid_argument("aggregate: trial with no rows");
  }

  AggregateSummary summary;
  summary.cost_grid = cost_grid;
  const Eigen::Index n_grid = cost_grid.size();
  const auto n_trials = static_cast<Eigen::Index>(results.size());

  Eigen::MatrixXd values(n_trials, n_grid);
  for (Eigen::Index r = 0; r < n_trials; ++r) {
    const auto& rows = results[static_cast<std::size_t>(r)].rows;
    std::size_t k = 0;
    for (Eigen::Index g = 0; g < n_grid; ++g) {
      while (k + 1 < rows.size() && rows[k + 1].cumulative_cost <= cost_grid[g]) {
        ++k;
      }
      // Before the first observation the trial reports its first best value.
      values(r, g) = rows[k].y_best;
    }
  }
  summary.mean_best = values.colwise().mean();
  summary.std_best = Eigen::VectorXd::Zero(n_grid);
  for (Eigen::Index g = 0; g < n_grid; ++g) {
    const Eigen::VectorXd column = values.col(g);
    summary.std_best[g] =
        std::sqrt((column.array() - summary.mean_best[g]).square().mean());
  }

  int max_t = 0;
  int n_contexts = results.front().dataset.context_dim;
  for (const TrialResult& r : results) {
    max_t = std::max(max_t, static_cast<int>(r.rows.size()));
    n_contexts = std::max(n_contexts, r.dataset.context_dim);
  }
  summary.inclusion = Eigen::MatrixXd::Zero(max_t, n_contexts);
  summary.inclusion_counts.assign(static_cast<std::size_t>(max_t), 0);
  for (const TrialResult& r : results) {
    for (const IterationRow& row : r.rows) {
      const int idx = row.t - 1;
      ++summary.inclusion_counts[static_cast<std::size_t>(idx)];
      for (int j = 0; j < n_contexts; ++j) {
        if (row.selected_mask >> j & 1) summary.inclusion(idx, j) += 1.0;
      }
    }
  }
  for (int i = 0; i < max_t; ++i) {
    const int count = summary.inclusion_counts[static_cast<std::size_t>(i)];
    if (count > 0) summary.inclusion.row(i) /= static_cast<double>(count);
  }

  for (const TrialResult& r : results) {
    summary.switch_iterations.push_back(r.switch_iteration);
    summary.switch_fractions.push_back(r.switch_cost_fraction);
  }
  return summary;
}

}  // namespace sadcbo
