#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "sadcbo/experiment.hpp"
#include "sadcbo/quasirandom.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

sadcbo::SweepCell cell_at(const std::string& config_text, std::size_t index) {
  const json resolved = sadcbo::normalize_config(json::parse(config_text));
  std::vector<sadcbo::SweepCell> cells = sadcbo::expand_cells(resolved);
  if (index >= cells.size()) {
    throw std::out_of_range("cell index " + std::to_string(index) +
                            " out of range for " + std::to_string(cells.size()) +
                            " cell(s)");
  }
  return std::move(cells[index]);
}

py::dict trial_to_dict(const sadcbo::TrialResult& result) {
  const auto n = static_cast<py::ssize_t>(result.rows.size());
  py::array_t<int> t(n);
  py::array_t<double> cumulative(n);
  py::array_t<double> y_best(n);
  py::array_t<int> phase(n);
  py::array_t<std::uint64_t> mask(n);
  py::array_t<double> bound(n);
  py::array_t<double> threshold(n);
  auto* t_ptr = t.mutable_data();
  auto* c_ptr = cumulative.mutable_data();
  auto* y_ptr = y_best.mutable_data();
  auto* p_ptr = phase.mutable_data();
  auto* m_ptr = mask.mutable_data();
  auto* b_ptr = bound.mutable_data();
  auto* s_ptr = threshold.mutable_data();
  for (py::ssize_t i = 0; i < n; ++i) {
    const sadcbo::IterationRow& row = result.rows[static_cast<std::size_t>(i)];
    t_ptr[i] = row.t;
    c_ptr[i] = row.cumulative_cost;
    y_ptr[i] = row.y_best;
    p_ptr[i] = row.phase;
    m_ptr[i] = row.selected_mask;
    b_ptr[i] = row.delta_r_bound;
    s_ptr[i] = row.s_threshold;
  }

  py::dict out;
  out["t"] = t;
  out["cumulative_cost"] = cumulative;
  out["y_best"] = y_best;
  out["phase"] = phase;
  out["selected_mask"] = mask;
  out["delta_R_bound"] = bound;
  out["s_t"] = threshold;
  out["switch_iteration"] = result.switch_iteration;
  out["switch_cost_fraction"] = result.switch_cost_fraction;
  out["baseline"] = sadcbo::baseline_name(result.baseline);
  out["seed"] = result.seed;
  out["X"] = result.dataset.X;
  out["y"] = result.dataset.y;
  out["design_dim"] = result.dataset.design_dim;
  out["context_dim"] = result.dataset.context_dim;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cost-aware contextual Bayesian optimization core";
  m.attr("__version__") = sadcbo::kVersion;

  m.def(
      "sobol_sequence",
      [](int dims, int count, std::uint64_t seed) {
        sadcbo::SobolSequence sequence(dims, seed);
        Eigen::MatrixXd points(count, dims);
        for (int i = 0; i < count; ++i) points.row(i) = sequence.next();
        return points;
      },
      py::arg("dims"), py::arg("count"), py::arg("seed") = 0,
      "Scrambled Sobol points in [0,1)^dims, one per row");

  m.def("hartmann6", &sadcbo::hartmann6, py::arg("x"),
        "Six-dimensional Hartmann function over [0,1]^6 (negated Gaussians)");
  m.def("ackley5", &sadcbo::ackley5, py::arg("x"),
        "Five-dimensional Ackley function over [-5,5]^5");
  m.def("kl_univariate", &sadcbo::kl_univariate, py::arg("mean_p"),
        py::arg("var_p"), py::arg("mean_q"), py::arg("var_q"),
        "KL divergence between two univariate Gaussians");

  m.def(
      "sobol_indices",
      [](const std::string& function, Eigen::Index n_base, std::uint64_t seed) {
        std::function<double(const Eigen::VectorXd&)> wrapped;
        int dim = 0;
        if (function == "hartmann6") {
          dim = 6;
          wrapped = [](const Eigen::VectorXd& v) { return sadcbo::hartmann6(v); };
        } else if (function == "ackley5") {
          dim = 5;
          wrapped = [](const Eigen::VectorXd& v) {
            return sadcbo::ackley5((v.array() * 10.0 - 5.0).matrix());
          };
        } else {
          throw std::invalid_argument("unknown function '" + function + "'");
        }
        const sadcbo::SobolIndices indices =
            sadcbo::sobol_indices(wrapped, dim, n_base, seed);
        return py::make_tuple(indices.first_order, indices.total_order);
      },
      py::arg("function"), py::arg("n_base") = 65536, py::arg("seed") = 1,
      "Saltelli first/total-order indices of a named benchmark over the unit cube");

  py::class_<sadcbo::GpModel>(m, "GpModel")
      .def("predict",
           [](const sadcbo::GpModel& self, const Eigen::MatrixXd& query) {
             const sadcbo::GaussianMoments posterior = self.posterior(query);
             return py::make_tuple(posterior.mean, posterior.covariance);
           },
           py::arg("query"),
           "Joint latent posterior (mean vector, covariance matrix) at the rows")
      .def("predictive",
           [](const sadcbo::GpModel& self, const Eigen::VectorXd& point) {
             return self.predictive(point);
           },
           py::arg("point"), "Noisy predictive (mean, variance) at one point")
      .def("log_marginal_likelihood", &sadcbo::GpModel::log_marginal_likelihood)
      .def_property_readonly("lengthscales",
                             [](const sadcbo::GpModel& self) {
                               return self.spec().lengthscales;
                             })
      .def_property_readonly("signal_variance",
                             [](const sadcbo::GpModel& self) {
                               return self.spec().signal_variance;
                             })
      .def_property_readonly("noise_variance", [](const sadcbo::GpModel& self) {
        return self.spec().noise_variance;
      });

  m.def(
      "fit_gp",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int design_columns,
         double noise_variance, const std::string& composition, int restarts,
         int max_iterations, std::uint64_t seed) {
        sadcbo::KernelSpec spec;
        spec.composition = composition == "additive"
                               ? sadcbo::KernelComposition::additive
                               : sadcbo::KernelComposition::product;
        spec.lengthscales = Eigen::VectorXd::Ones(X.cols());
        spec.signal_variance = 1.0;
        spec.noise_variance = noise_variance;
        std::vector<Eigen::Index> columns(static_cast<std::size_t>(X.cols()));
        for (Eigen::Index i = 0; i < X.cols(); ++i) {
          columns[static_cast<std::size_t>(i)] = i;
        }
        sadcbo::FitConfig config;
        config.restarts = restarts;
        config.max_iterations = max_iterations;
        config.seed = seed;
        return sadcbo::GpModel::fit(spec, columns, design_columns, X, y, config);
      },
      py::arg("X"), py::arg("y"), py::arg("design_columns"),
      py::arg("noise_variance") = 1e-3, py::arg("composition") = "product",
      py::arg("restarts") = 2, py::arg("max_iterations") = 40,
      py::arg("seed") = 0,
      "Maximum-marginal-likelihood GP fit over all input columns");

  m.def("normalize_config",
        [](const std::string& config_text) {
          return sadcbo::normalize_config(json::parse(config_text)).dump(2);
        },
        py::arg("config"), "Resolved experiment config as pretty JSON text");

  m.def("baseline_names", [] {
    std::vector<std::string> names;
    for (sadcbo::BaselineId id : sadcbo::all_baselines()) {
      names.push_back(sadcbo::baseline_name(id));
    }
    return names;
  });

  m.def(
      "run_trial",
      [](const std::string& config_text, const std::string& baseline, int trial,
         std::size_t cell_index) {
        const sadcbo::SweepCell cell = cell_at(config_text, cell_index);
        const sadcbo::Problem problem(sadcbo::problem_spec_from(cell.config));
        const sadcbo::TrialResult result = sadcbo::run_cell_trial(
            problem, cell, sadcbo::baseline_from_name(baseline), trial);
        return trial_to_dict(result);
      },
      py::arg("config"), py::arg("baseline") = "SADCBO", py::arg("trial") = 0,
      py::arg("cell") = 0,
      "One seeded trial of a config cell; returns per-iteration arrays");

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& out_dir,
         int workers) {
        const sadcbo::ExperimentOutcome outcome = sadcbo::run_experiment(
            json::parse(config_text), out_dir, workers);
        py::dict result;
        result["directory"] = outcome.directory.string();
        result["cells"] = outcome.cells;
        result["trials"] = outcome.trials;
        result["failures"] = outcome.failures;
        return result;
      },
      py::arg("config"), py::arg("out_dir"), py::arg("workers") = 0,
      "Run all cells/baselines/trials and write CSV artifacts");

  m.def("summarize",
        [](const std::string& directory) {
          return sadcbo::summarize_directory(directory);
        },
        py::arg("directory"), "Recompute summary tables from results.csv files");

  m.def("sobol_report", &sadcbo::sobol_report, py::arg("function"),
        py::arg("n_base") = 65536, py::arg("seed") = 1,
        "Text table of first/total-order indices with role labels");
}
