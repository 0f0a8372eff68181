#include "sadcbo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

namespace sadcbo {
namespace {

using nlohmann::json;

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

BaseFunction parse_base_function(const std::string& name) {
  if (name == "ackley5") return BaseFunction::ackley5;
  if (name == "hartmann6") return BaseFunction::hartmann6;
  throw std::invalid_argument("unknown base function '" + name +
                              "' (expected ackley5 or hartmann6)");
}

ContextDistribution parse_distribution(const std::string& name) {
  if (name == "uniform01") return ContextDistribution::uniform01;
  if (name == "beta22") return ContextDistribution::beta22;
  if (name == "beta_half") return ContextDistribution::beta_half;
  throw std::invalid_argument(
      "unknown context distribution '" + name +
      "' (expected uniform01, beta22, or beta_half)");
}

KernelComposition parse_composition(const std::string& name) {
  if (name == "product") return KernelComposition::product;
  if (name == "additive") return KernelComposition::additive;
  throw std::invalid_argument("unknown kernel composition '" + name +
                              "' (expected product or additive)");
}

ForwardSelectRule parse_fs_rule(const std::string& name) {
  if (name == "stop_rule") return ForwardSelectRule::stop_rule;
  if (name == "verbatim_break") return ForwardSelectRule::verbatim_break;
  throw std::invalid_argument("unknown forward-selection rule '" + name +
                              "' (expected stop_rule or verbatim_break)");
}

KappaRule parse_kappa_rule(const std::string& name) {
  if (name == "constant_sqrt_2log") return KappaRule::constant_sqrt_2log;
  throw std::invalid_argument("unknown kappa rule '" + name +
                              "' (expected constant_sqrt_2log)");
}

json spec_to_json(const ProblemSpec& spec) {
  json problem;
  problem["base_function"] =
      spec.base_function == BaseFunction::ackley5 ? "ackley5" : "hartmann6";
  problem["design_indices"] = spec.design_indices;
  problem["relevant_context_indices"] = spec.relevant_context_indices;
  problem["num_irrelevant_contexts"] = spec.num_irrelevant_contexts;
  problem["context_distribution"] = "uniform01";
  problem["noise_variance"] = spec.noise_variance;
  return problem;
}

// Recursively overlays `user` on `base`; keys absent from the defaults tree
// or with mismatched value kinds are collected into `errors` by dotted path.
void deep_merge(json& base, const json& user, const std::string& path,
                std::vector<std::string>& errors) {
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) {
      errors.push_back("unknown key '" + here + "'");
      continue;
    }
    json& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      deep_merge(slot, value, here, errors);
    } else if (slot.is_object() || value.is_object()) {
      errors.push_back("expected " + std::string(slot.is_object() ? "a table" : "a value") +
                       " at '" + here + "'");
    } else if (slot.is_number() && !value.is_number()) {
      errors.push_back("expected a number at '" + here + "'");
    } else if (slot.is_string() && !value.is_string()) {
      errors.push_back("expected a string at '" + here + "'");
    } else if (slot.is_boolean() && !value.is_boolean()) {
      errors.push_back("expected a boolean at '" + here + "'");
    } else if (slot.is_array() && !value.is_array()) {
      errors.push_back("expected an array at '" + here + "'");
    } else {
      slot = value;
    }
  }
}

json::json_pointer pointer_of(const std::string& dotted) {
  std::string escaped = dotted;
  std::replace(escaped.begin(), escaped.end(), '.', '/');
  return json::json_pointer("/" + escaped);
}

// Validates the merged config in place; appends one message per problem.
void validate_config(const json& config, std::vector<std::string>& errors) {
  const auto fail = [&errors](const std::string& message) {
    errors.push_back(message);
  };

  const json& base_seed = config.at("base_seed");
  if (!base_seed.is_number_integer() ||
      (!base_seed.is_number_unsigned() && base_seed.get<std::int64_t>() < 0)) {
    fail("'base_seed' must be a non-negative integer");
  }
  if (!config.at("trials").is_number_integer() ||
      config.at("trials").get<int>() < 1) {
    fail("'trials' must be an integer >= 1");
  }
  if (config.at("budget").get<double>() <= 0.0) fail("'budget' must be positive");
  if (!config.at("grid_points").is_number_integer() ||
      config.at("grid_points").get<int>() < 1) {
    fail("'grid_points' must be an integer >= 1");
  }

  const json& baselines = config.at("baselines");
  if (baselines.empty()) fail("'baselines' must list at least one method");
  for (const json& name : baselines) {
    if (!name.is_string()) {
      fail("'baselines' entries must be strings");
      continue;
    }
    try {
      baseline_from_name(name.get<std::string>());
    } catch (const std::exception& error) {
      fail(std::string("'baselines': ") + error.what());
    }
  }

  const json& problem = config.at("problem");
  try {
    parse_base_function(problem.at("base_function").get<std::string>());
  } catch (const std::exception& error) {
    fail(std::string("'problem.base_function': ") + error.what());
  }
  try {
    parse_distribution(problem.at("context_distribution").get<std::string>());
  } catch (const std::exception& error) {
    fail(std::string("'problem.context_distribution': ") + error.what());
  }
  if (problem.at("design_indices").empty()) {
    fail("'problem.design_indices' must not be empty");
  }
  for (const char* key : {"design_indices", "relevant_context_indices"}) {
    for (const json& index : problem.at(key)) {
      if (!index.is_number_integer() || index.get<int>() < 0) {
        fail("'problem." + std::string(key) + "' entries must be integers >= 0");
        break;
      }
    }
  }
  if (!problem.at("num_irrelevant_contexts").is_number_integer() ||
      problem.at("num_irrelevant_contexts").get<int>() < 0) {
    fail("'problem.num_irrelevant_contexts' must be an integer >= 0");
  }
  if (problem.at("noise_variance").get<double>() < 0.0) {
    fail("'problem.noise_variance' must be non-negative");
  }

  const json& costs = config.at("costs");
  if (costs.at("design_cost").get<double>() <= 0.0) {
    fail("'costs.design_cost' must be positive");
  }
  const std::string law = costs.at("law").get<std::string>();
  if (law != "fixed" && law != "uniform") {
    fail("'costs.law' must be fixed or uniform");
  }
  if (costs.at("context_cost").get<double>() <= 0.0) {
    fail("'costs.context_cost' must be positive");
  }
  for (const json& cost : costs.at("context_costs")) {
    if (!cost.is_number() || cost.get<double>() <= 0.0) {
      fail("'costs.context_costs' entries must be positive numbers");
      break;
    }
  }
  const double low = costs.at("low").get<double>();
  const double high = costs.at("high").get<double>();
  if (!(low > 0.0 && high >= low)) {
    fail("'costs.low'/'costs.high' must satisfy 0 < low <= high");
  }

  const json& hyper = config.at("hyper");
  const double eta = hyper.at("eta").get<double>();
  if (!(eta >= 0.0 && eta < 1.0)) fail("'hyper.eta' must lie in [0, 1)");
  const double gamma = hyper.at("gamma").get<double>();
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("'hyper.gamma' must lie in (0, 1]");
  if (hyper.at("q_batch").get<int>() < 0) fail("'hyper.q_batch' must be >= 0");
  if (hyper.at("n_init").get<int>() < 1) fail("'hyper.n_init' must be >= 1");
  if (hyper.at("max_iterations").get<int>() < 0) {
    fail("'hyper.max_iterations' must be >= 0");
  }
  if (hyper.at("beta").get<double>() <= 0.0) fail("'hyper.beta' must be positive");
  if (hyper.at("beta_fs").get<double>() <= 0.0) {
    fail("'hyper.beta_fs' must be positive");
  }
  const double delta = hyper.at("delta").get<double>();
  if (!(delta > 0.0 && delta < 1.0)) fail("'hyper.delta' must lie in (0, 1)");
  for (const char* key : {"fit_restarts", "fit_max_iterations", "mc_samples",
                          "raw_candidates", "batch_candidates"}) {
    if (hyper.at(key).get<int>() < 1) {
      fail("'hyper." + std::string(key) + "' must be >= 1");
    }
  }
  for (const char* key : {"refine_steps", "refine_restarts"}) {
    if (hyper.at(key).get<int>() < 0) {
      fail("'hyper." + std::string(key) + "' must be >= 0");
    }
  }
  if (hyper.at("q_batch").get<int>() > 0 && hyper.at("mc_samples").get<int>() < 64) {
    fail("'hyper.mc_samples' must be >= 64 when q_batch > 0");
  }
  for (const char* key : {"init_lengthscale", "init_signal_variance"}) {
    if (hyper.at(key).get<double>() <= 0.0) {
      fail("'hyper." + std::string(key) + "' must be positive");
    }
  }
  try {
    parse_composition(hyper.at("composition").get<std::string>());
  } catch (const std::exception& error) {
    fail(std::string("'hyper.composition': ") + error.what());
  }
  try {
    parse_fs_rule(hyper.at("fs_rule").get<std::string>());
  } catch (const std::exception& error) {
    fail(std::string("'hyper.fs_rule': ") + error.what());
  }
  try {
    parse_kappa_rule(hyper.at("kappa_rule").get<std::string>());
  } catch (const std::exception& error) {
    fail(std::string("'hyper.kappa_rule': ") + error.what());
  }

  // Expanded cell configs have their sweep axes removed already.
  static const json no_sweeps = json::array();
  const json& sweeps = config.contains("sweeps") ? config.at("sweeps") : no_sweeps;
  for (std::size_t i = 0; i < sweeps.size(); ++i) {
    const std::string label = "'sweeps[" + std::to_string(i) + "]'";
    const json& axis = sweeps[i];
    if (!axis.is_object() || !axis.contains("path") || !axis.contains("values") ||
        axis.size() != 2) {
      fail(label + " must be a table with exactly 'path' and 'values'");
      continue;
    }
    if (!axis.at("path").is_string()) {
      fail(label + ".path must be a string");
      continue;
    }
    const std::string path = axis.at("path").get<std::string>();
    if (path.empty() || path == "sweeps" || path.rfind("sweeps.", 0) == 0) {
      fail(label + ".path may not target the sweep axes");
      continue;
    }
    if (!config.contains(pointer_of(path))) {
      fail(label + ".path '" + path + "' does not name a config key");
      continue;
    }
    const json& values = axis.at("values");
    if (!values.is_array() || values.empty()) {
      fail(label + ".values must be a non-empty array");
      continue;
    }
    for (const json& value : values) {
      if (value.is_number() && !std::isfinite(value.get<double>())) {
        fail(label + ".values must be finite");
        break;
      }
    }
  }
}

// Directory-safe label for one swept value.
std::string value_label(const json& value) {
  std::string text = value.is_string() ? value.get<std::string>() : value.dump();
  std::string label;
  for (char c : text) {
    if (c == '.') {
      label += 'p';
    } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
               c == '-' || c == '+') {
      label += c;
    }
  }
  if (label.empty()) label = "v";
  if (label.size() > 40) label.resize(40);
  return label;
}

std::string leaf_of(const std::string& dotted) {
  const std::size_t dot = dotted.rfind('.');
  return dot == std::string::npos ? dotted : dotted.substr(dot + 1);
}

struct TrialTask {
  std::size_t cell = 0;
  BaselineId baseline = BaselineId::sadcbo;
  int trial = 0;
};

std::string csv_line(const ResultRecord& record) {
  std::ostringstream line;
  line << record.t << ',' << format_double(record.cumulative_cost) << ','
       << format_double(record.y_best) << ',' << record.phase << ','
       << record.selected_mask << ',' << format_double(record.delta_r_bound)
       << ',' << format_double(record.s_threshold) << ',' << record.baseline
       << ',' << record.trial << ',' << record.seed;
  return line.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::vector<ResultRecord> records_of(const TrialResult& result, int trial) {
  std::vector<ResultRecord> records;
  records.reserve(result.rows.size());
  for (const IterationRow& row : result.rows) {
    ResultRecord record;
    record.t = row.t;
    record.cumulative_cost = row.cumulative_cost;
    record.y_best = row.y_best;
    record.phase = row.phase;
    record.selected_mask = row.selected_mask;
    record.delta_r_bound = row.delta_r_bound;
    record.s_threshold = row.s_threshold;
    record.baseline = baseline_name(result.baseline);
    record.trial = trial;
    record.seed = result.seed;
    records.push_back(std::move(record));
  }
  return records;
}

// Rebuilds the per-trial summaries aggregate() needs from logged records.
// The switch point is read off the phase column: the first interventional
// row's t, with the cost fraction taken at the preceding row.
TrialResult trial_from_records(const std::vector<ResultRecord>& records,
                               int context_dim, double budget) {
  TrialResult result;
  result.dataset = Dataset(0, context_dim);
  if (!records.empty()) {
    result.baseline = baseline_from_name(records.front().baseline);
    result.seed = records.front().seed;
  }
  double previous_cost = 0.0;
  for (const ResultRecord& record : records) {
    IterationRow row;
    row.t = record.t;
    row.cumulative_cost = record.cumulative_cost;
    row.step_cost = record.cumulative_cost - previous_cost;
    row.y_best = record.y_best;
    row.phase = record.phase;
    row.selected_mask = record.selected_mask;
    row.delta_r_bound = record.delta_r_bound;
    row.s_threshold = record.s_threshold;
    if (record.phase == 1 && result.switch_iteration < 0) {
      result.switch_iteration = record.t;
      result.switch_cost_fraction = previous_cost / budget;
    }
    previous_cost = record.cumulative_cost;
    result.rows.push_back(std::move(row));
  }
  return result;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  }
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

// Writes the per-cell aggregate tables next to the cell's results.csv.
void write_cell_tables(const std::filesystem::path& cell_dir,
                       const std::vector<std::string>& baseline_order,
                       const std::map<std::string, std::vector<TrialResult>>& by_baseline,
                       const std::map<std::string, std::vector<int>>& trial_ids,
                       double budget, int grid_points) {
  Eigen::VectorXd grid(grid_points);
  for (int g = 0; g < grid_points; ++g) {
    grid[g] = budget * static_cast<double>(g + 1) / grid_points;
  }

  std::ostringstream summary;
  summary << "baseline,cumulative_cost,mean_best,std_best\n";
  std::ostringstream inclusion;
  inclusion << "baseline,t,context,inclusion,trials\n";
  std::ostringstream switches;
  switches << "baseline,trial,switch_iteration,switch_cost_fraction\n";

  for (const std::string& name : baseline_order) {
    const auto found = by_baseline.find(name);
    if (found == by_baseline.end() || found->second.empty()) continue;
    const AggregateSummary tables = aggregate(found->second, grid);
    for (int g = 0; g < grid_points; ++g) {
      summary << name << ',' << format_double(grid[g]) << ','
              << format_double(tables.mean_best[g]) << ','
              << format_double(tables.std_best[g]) << '\n';
    }
    for (Eigen::Index t = 0; t < tables.inclusion.rows(); ++t) {
      for (Eigen::Index j = 0; j < tables.inclusion.cols(); ++j) {
        inclusion << name << ',' << t + 1 << ',' << j << ','
                  << format_double(tables.inclusion(t, j)) << ','
                  << tables.inclusion_counts[static_cast<std::size_t>(t)] << '\n';
      }
    }
    const std::vector<int>& ids = trial_ids.at(name);
    for (std::size_t k = 0; k < found->second.size(); ++k) {
      switches << name << ',' << ids[k] << ','
               << tables.switch_iterations[k] << ','
               << format_double(tables.switch_fractions[k]) << '\n';
    }
  }

  write_text(cell_dir / "summary.csv", summary.str());
  write_text(cell_dir / "inclusion.csv", inclusion.str());
  write_text(cell_dir / "switch.csv", switches.str());
}

}  // namespace

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 14695981039346656037ull;
  for (char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ull;
  }
  return hash;
}

json default_config(BaseFunction base) {
  const ProblemSpec spec = base == BaseFunction::ackley5
                               ? default_ackley_spec()
                               : default_hartmann_spec();
  json config;
  config["name"] = "experiment";
  config["base_seed"] = 1;
  config["trials"] = 20;
  config["paired"] = true;
  config["budget"] = 100.0;
  config["grid_points"] = 50;
  config["baselines"] = json::array({"SADCBO"});
  config["problem"] = spec_to_json(spec);
  config["costs"] = {{"design_cost", 1.0}, {"law", "fixed"},
                     {"context_cost", 3.0}, {"context_costs", json::array()},
                     {"low", 0.5},          {"high", 2.0}};
  config["hyper"] = {{"eta", 0.8},
                     {"gamma", 0.8},
                     {"q_batch", 10},
                     {"n_init", 5},
                     {"max_iterations", 0},
                     {"beta", 4.0},
                     {"beta_fs", 10.0},
                     {"fs_rule", "stop_rule"},
                     {"composition", "product"},
                     {"init_lengthscale", 1.0},
                     {"init_signal_variance", 1.0},
                     {"delta", 0.1},
                     {"kappa_rule", "constant_sqrt_2log"},
                     {"noise_as_std", false},
                     {"fit_restarts", 2},
                     {"fit_max_iterations", 40},
                     {"mc_samples", 128},
                     {"raw_candidates", 1024},
                     {"batch_candidates", 256},
                     {"refine_steps", 50},
                     {"refine_restarts", 4}};
  config["sweeps"] = json::array();
  return config;
}

json normalize_config(const json& input) {
  const json* user = &input;
  if (input.is_object() && input.contains("config") &&
      input.at("config").is_object()) {
    user = &input.at("config");  // manifest passed back in
  }
  if (!user->is_object()) {
    throw std::invalid_argument("config root must be a table");
  }

  BaseFunction base = BaseFunction::ackley5;
  if (user->contains("problem") && user->at("problem").is_object() &&
      user->at("problem").contains("base_function") &&
      user->at("problem").at("base_function").is_string()) {
    base = parse_base_function(
        user->at("problem").at("base_function").get<std::string>());
  }

  json resolved = default_config(base);
  std::vector<std::string> errors;
  deep_merge(resolved, *user, "", errors);
  if (errors.empty()) validate_config(resolved, errors);
  if (!errors.empty()) {
    std::string message = "invalid config:";
    for (const std::string& error : errors) message += "\n  - " + error;
    throw std::invalid_argument(message);
  }
  for (json& name : resolved.at("baselines")) {
    name = baseline_name(baseline_from_name(name.get<std::string>()));
  }
  return resolved;
}

std::vector<SweepCell> expand_cells(const json& resolved) {
  const json& sweeps = resolved.at("sweeps");
  json base = resolved;
  base.erase("sweeps");

  std::vector<SweepCell> cells;
  std::vector<std::size_t> odometer(sweeps.size(), 0);
  std::set<std::string> used_names;
  for (;;) {
    SweepCell cell;
    cell.config = base;
    std::string name;
    for (std::size_t axis = 0; axis < sweeps.size(); ++axis) {
      const std::string path = sweeps[axis].at("path").get<std::string>();
      const json& value = sweeps[axis].at("values")[odometer[axis]];
      cell.config[pointer_of(path)] = value;
      if (!name.empty()) name += "_";
      name += leaf_of(path) + "=" + value_label(value);
    }
    if (name.empty()) name = "base";
    if (!used_names.insert(name).second) {
      name += "_" + std::to_string(cells.size());
      used_names.insert(name);
    }
    cell.name = std::move(name);
    cell.hash = fnv1a64(cell.config.dump());
    cells.push_back(std::move(cell));

    // Advance the odometer, last axis fastest.
    std::size_t axis = sweeps.size();
    while (axis > 0) {
      --axis;
      if (++odometer[axis] < sweeps[axis].at("values").size()) break;
      odometer[axis] = 0;
      if (axis == 0) return cells;
    }
    if (sweeps.empty()) return cells;
  }
}

ProblemSpec problem_spec_from(const json& cell) {
  const json& problem = cell.at("problem");
  ProblemSpec spec;
  spec.base_function =
      parse_base_function(problem.at("base_function").get<std::string>());
  spec.design_indices = problem.at("design_indices").get<std::vector<int>>();
  spec.relevant_context_indices =
      problem.at("relevant_context_indices").get<std::vector<int>>();
  spec.num_irrelevant_contexts =
      problem.at("num_irrelevant_contexts").get<int>();
  spec.context_distribution =
      parse_distribution(problem.at("context_distribution").get<std::string>());
  spec.noise_variance = problem.at("noise_variance").get<double>();
  return spec;
}

EngineHyper hyper_from(const json& cell) {
  const json& hyper = cell.at("hyper");
  EngineHyper out;
  out.eta = hyper.at("eta").get<double>();
  out.gamma = hyper.at("gamma").get<double>();
  out.q_batch = hyper.at("q_batch").get<int>();
  out.beta_fs = hyper.at("beta_fs").get<double>();
  out.fs_rule = parse_fs_rule(hyper.at("fs_rule").get<std::string>());
  out.n_init = hyper.at("n_init").get<int>();
  out.max_iterations = hyper.at("max_iterations").get<int>();
  out.init_lengthscale = hyper.at("init_lengthscale").get<double>();
  out.init_signal_variance = hyper.at("init_signal_variance").get<double>();
  out.composition =
      parse_composition(hyper.at("composition").get<std::string>());
  out.fit_config.restarts = hyper.at("fit_restarts").get<int>();
  out.fit_config.max_iterations = hyper.at("fit_max_iterations").get<int>();
  out.acq_config.beta = hyper.at("beta").get<double>();
  out.acq_config.mc_samples = hyper.at("mc_samples").get<int>();
  out.acq_config.raw_candidates = hyper.at("raw_candidates").get<int>();
  out.acq_config.batch_candidates = hyper.at("batch_candidates").get<int>();
  out.acq_config.refine_steps = hyper.at("refine_steps").get<int>();
  out.acq_config.refine_restarts = hyper.at("refine_restarts").get<int>();
  out.stop_config.delta = hyper.at("delta").get<double>();
  out.stop_config.kappa_rule =
      parse_kappa_rule(hyper.at("kappa_rule").get<std::string>());
  out.stop_config.noise_as_std = hyper.at("noise_as_std").get<bool>();
  return out;
}

CostModel cost_model_from(const json& cell, int context_dim, Rng& cost_rng) {
  const json& costs = cell.at("costs");
  CostModel model;
  model.design_cost = costs.at("design_cost").get<double>();
  model.context_costs.resize(context_dim);
  const std::string law = costs.at("law").get<std::string>();
  if (law == "uniform") {
    const double low = costs.at("low").get<double>();
    const double high = costs.at("high").get<double>();
    for (int j = 0; j < context_dim; ++j) {
      model.context_costs[j] = low + (high - low) * cost_rng.uniform();
    }
    return model;
  }
  const json& vector = costs.at("context_costs");
  if (!vector.empty()) {
    if (static_cast<int>(vector.size()) != context_dim) {
      throw std::invalid_argument(
          "'costs.context_costs' has " + std::to_string(vector.size()) +
          " entries but the problem has " + std::to_string(context_dim) +
          " contexts");
    }
    for (int j = 0; j < context_dim; ++j) {
      model.context_costs[j] = vector[static_cast<std::size_t>(j)].get<double>();
    }
  } else {
    model.context_costs.setConstant(costs.at("context_cost").get<double>());
  }
  return model;
}

TrialSeeds trial_seeds(std::uint64_t base_seed, std::uint64_t cell_hash,
                       int trial, BaselineId baseline, bool paired) {
  const std::uint64_t cell_seed = derive_seed(base_seed, {cell_hash});
  const std::uint64_t pair_seed =
      derive_seed(cell_seed, {static_cast<std::uint64_t>(trial) + 1});
  TrialSeeds seeds;
  seeds.identity =
      derive_seed(pair_seed, {1000 + static_cast<std::uint64_t>(baseline)});
  seeds.bundle = paired
                     ? make_seed_bundle(pair_seed, seeds.identity)
                     : make_seed_bundle(derive_seed(seeds.identity, {17}),
                                        seeds.identity);
  return seeds;
}

TrialResult run_cell_trial(const Problem& problem, const SweepCell& cell,
                           BaselineId baseline, int trial) {
  const json& config = cell.config;
  const TrialSeeds seeds =
      trial_seeds(config.at("base_seed").get<std::uint64_t>(), cell.hash, trial,
                  baseline, config.at("paired").get<bool>());
  Rng cost_rng(seeds.bundle.cost);
  const CostModel costs =
      cost_model_from(config, problem.context_dim(), cost_rng);
  TrialResult result =
      run_baseline(baseline, problem, costs, hyper_from(config),
                   config.at("budget").get<double>(), seeds.bundle);
  result.seed = seeds.identity;
  return result;
}

void write_results_csv(const std::filesystem::path& path,
                       const std::vector<ResultRecord>& records) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const ResultRecord& record : records) out << csv_line(record) << '\n';
  write_text(path, out.str());
}

std::vector<ResultRecord> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw std::runtime_error("'" + path.string() +
                             "' does not start with the results header");
  }
  std::vector<ResultRecord> records;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != 10) {
      throw std::runtime_error("'" + path.string() + "' line " +
                               std::to_string(line_number) + ": expected 10 fields");
    }
    ResultRecord record;
    record.t = std::stoi(fields[0]);
    record.cumulative_cost = std::strtod(fields[1].c_str(), nullptr);
    record.y_best = std::strtod(fields[2].c_str(), nullptr);
    record.phase = std::stoi(fields[3]);
    record.selected_mask = std::stoull(fields[4]);
    record.delta_r_bound = std::strtod(fields[5].c_str(), nullptr);
    record.s_threshold = std::strtod(fields[6].c_str(), nullptr);
    record.baseline = fields[7];
    record.trial = std::stoi(fields[8]);
    record.seed = std::stoull(fields[9]);
    records.push_back(std::move(record));
  }
  return records;
}

ExperimentOutcome run_experiment(const json& config,
                                 const std::filesystem::path& out_dir,
                                 int workers) {
  const json resolved = normalize_config(config);
  const std::vector<SweepCell> cells = expand_cells(resolved);

  // Validate every cell's derived inputs before any expensive work, so a
  // bad sweep value fails the whole run with a diagnostic.
  for (const SweepCell& cell : cells) {
    try {
      std::vector<std::string> cell_errors;
      validate_config(cell.config, cell_errors);
      if (!cell_errors.empty()) {
        std::string joined = cell_errors.front();
        for (std::size_t i = 1; i < cell_errors.size(); ++i) {
          joined += "; " + cell_errors[i];
        }
        throw std::invalid_argument(joined);
      }
      const ProblemSpec spec = problem_spec_from(cell.config);
      const int context_dim = static_cast<int>(spec.relevant_context_indices.size()) +
                              spec.num_irrelevant_contexts;
      Rng probe_rng(0);
      (void)cost_model_from(cell.config, context_dim, probe_rng);
      (void)hyper_from(cell.config);
    } catch (const std::exception& error) {
      throw std::invalid_argument("cell '" + cell.name + "': " + error.what());
    }
  }

  std::filesystem::create_directories(out_dir);

  json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = resolved;
  manifest["cells"] = json::array();
  for (const SweepCell& cell : cells) {
    manifest["cells"].push_back(
        {{"name", cell.name}, {"hash", cell.hash}, {"directory", cell.name}});
  }
  manifest["failures"] = json::array();
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

  // Problems are immutable after construction and shared across the pool.
  std::vector<Problem> problems;
  problems.reserve(cells.size());
  for (const SweepCell& cell : cells) {
    problems.emplace_back(problem_spec_from(cell.config));
  }

  std::vector<TrialTask> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const json& cfg = cells[c].config;
    const int trials = cfg.at("trials").get<int>();
    for (const json& name : cfg.at("baselines")) {
      const BaselineId baseline = baseline_from_name(name.get<std::string>());
      for (int trial = 0; trial < trials; ++trial) {
        tasks.push_back({c, baseline, trial});
      }
    }
  }

  std::vector<TrialResult> results(tasks.size());
  std::vector<std::string> task_failures(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (;;) {
      const std::size_t index = next.fetch_add(1);
      if (index >= tasks.size()) break;
      const TrialTask& task = tasks[index];
      try {
        results[index] = run_cell_trial(problems[task.cell], cells[task.cell],
                                        task.baseline, task.trial);
      } catch (const std::exception& error) {
        task_failures[index] = cells[task.cell].name + "/" +
                               baseline_name(task.baseline) + "/" +
                               std::to_string(task.trial) + ": " + error.what();
      }
    }
  };

  const int pool =
      std::min(resolve_workers(workers),
               static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
  std::vector<std::thread> threads;
  for (int i = 1; i < pool; ++i) threads.emplace_back(work);
  work();
  for (std::thread& thread : threads) thread.join();

  ExperimentOutcome outcome;
  outcome.directory = out_dir;
  outcome.cells = static_cast<int>(cells.size());
  outcome.trials = static_cast<int>(tasks.size());

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const std::filesystem::path cell_dir = out_dir / cells[c].name;
    std::filesystem::create_directories(cell_dir);

    std::vector<ResultRecord> records;
    std::vector<std::string> baseline_order;
    std::map<std::string, std::vector<TrialResult>> by_baseline;
    std::map<std::string, std::vector<int>> trial_ids;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].cell != c) continue;
      if (!task_failures[i].empty()) {
        outcome.failures.push_back(task_failures[i]);
        continue;
      }
      const std::string name = baseline_name(tasks[i].baseline);
      if (by_baseline.find(name) == by_baseline.end()) {
        baseline_order.push_back(name);
      }
      const std::vector<ResultRecord> more = records_of(results[i], tasks[i].trial);
      records.insert(records.end(), more.begin(), more.end());
      by_baseline[name].push_back(results[i]);
      trial_ids[name].push_back(tasks[i].trial);
    }

    write_results_csv(cell_dir / "results.csv", records);
    write_cell_tables(cell_dir, baseline_order, by_baseline, trial_ids,
                      cells[c].config.at("budget").get<double>(),
                      cells[c].config.at("grid_points").get<int>());
  }

  if (!outcome.failures.empty()) {
    manifest["failures"] = outcome.failures;
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return outcome;
}

std::string summarize_directory(const std::filesystem::path& directory) {
  std::ifstream manifest_in(directory / "manifest.json");
  if (!manifest_in) {
    throw std::runtime_error("no manifest.json under '" + directory.string() + "'");
  }
  const json manifest = json::parse(manifest_in);
  const json resolved = normalize_config(manifest.at("config"));
  const std::vector<SweepCell> cells = expand_cells(resolved);

  std::ostringstream report;
  for (const json& entry : manifest.at("cells")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::filesystem::path cell_dir = directory / name;
    const std::vector<ResultRecord> records =
        read_results_csv(cell_dir / "results.csv");

    // Cell configs are re-derived from the manifest config and matched on
    // the stored hash, so the summaries use exactly the run's parameters.
    const SweepCell* cell = nullptr;
    for (const SweepCell& candidate : cells) {
      if (candidate.hash == entry.at("hash").get<std::uint64_t>()) {
        cell = &candidate;
        break;
      }
    }
    if (cell == nullptr) {
      throw std::runtime_error("cell '" + name + "' not derivable from manifest");
    }

    const ProblemSpec spec = problem_spec_from(cell->config);
    const int context_dim = static_cast<int>(spec.relevant_context_indices.size()) +
                            spec.num_irrelevant_contexts;
    const double budget = cell->config.at("budget").get<double>();

    std::vector<std::string> baseline_order;
    std::map<std::string, std::vector<TrialResult>> by_baseline;
    std::map<std::string, std::vector<int>> trial_ids;
    std::vector<ResultRecord> block;  // the writer emits contiguous trials
    const auto flush = [&] {
      if (block.empty()) return;
      const std::string baseline = block.front().baseline;
      if (by_baseline.find(baseline) == by_baseline.end()) {
        baseline_order.push_back(baseline);
      }
      by_baseline[baseline].push_back(
          trial_from_records(block, context_dim, budget));
      trial_ids[baseline].push_back(block.front().trial);
      block.clear();
    };
    for (const ResultRecord& record : records) {
      if (!block.empty() && (record.baseline != block.front().baseline ||
                             record.trial != block.front().trial)) {
        flush();
      }
      block.push_back(record);
    }
    flush();

    write_cell_tables(cell_dir, baseline_order, by_baseline, trial_ids, budget,
                      cell->config.at("grid_points").get<int>());

    report << name << ":\n";
    for (const std::string& baseline : baseline_order) {
      double total = 0.0;
      for (const TrialResult& trial : by_baseline[baseline]) {
        total += trial.rows.back().y_best;
      }
      const auto count = static_cast<double>(by_baseline[baseline].size());
      char buffer[64];
      std::snprintf(buffer, sizeof buffer, "  %-10s final best %.4f over %d trials\n",
                    baseline.c_str(), total / count,
                    static_cast<int>(count));
      report << buffer;
    }
  }
  return report.str();
}

std::string sobol_report(const std::string& function_name, Eigen::Index n_base,
                         std::uint64_t seed) {
  ProblemSpec spec;
  std::function<double(const Eigen::VectorXd&)> function;
  int dim = 0;
  if (function_name == "hartmann6") {
    spec = default_hartmann_spec();
    dim = 6;
    function = [](const Eigen::VectorXd& v) { return hartmann6(v); };
  } else if (function_name == "ackley5") {
    spec = default_ackley_spec();
    dim = 5;
    function = [](const Eigen::VectorXd& v) {
      return ackley5((v.array() * 10.0 - 5.0).matrix());
    };
  } else {
    throw std::invalid_argument("unknown function '" + function_name +
                                "' (expected ackley5 or hartmann6)");
  }

  const SobolIndices indices = sobol_indices(function, dim, n_base, seed);

  std::vector<std::string> labels(static_cast<std::size_t>(dim));
  for (int i : spec.design_indices) {
    labels[static_cast<std::size_t>(i)] = "x(" + std::to_string(i + 1) + ")";
  }
  for (int i : spec.relevant_context_indices) {
    labels[static_cast<std::size_t>(i)] = "z(" + std::to_string(i + 1) + ")";
  }

  std::ostringstream out;
  out << "variable  first_order  total_order\n";
  double design_sum = 0.0;
  double context_sum = 0.0;
  for (int i = 0; i < dim; ++i) {
    char buffer[80];
    std::snprintf(buffer, sizeof buffer, "%-8s  %11.4f  %11.4f\n",
                  labels[static_cast<std::size_t>(i)].c_str(),
                  indices.first_order[i], indices.total_order[i]);
    out << buffer;
    if (labels[static_cast<std::size_t>(i)][0] == 'x') {
      design_sum += indices.first_order[i];
    } else {
      context_sum += indices.first_order[i];
    }
  }
  char buffer[96];
  std::snprintf(buffer, sizeof buffer,
                "first-order sums: designs %.4f, contexts %.4f\n", design_sum,
                context_sum);
  out << buffer;
  return out.str();
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv(kWorkersEnvVar)) {
    const long value = std::strtol(env, nullptr, 10);
    if (value > 0) return static_cast<int>(value);
  }
  const unsigned hardware = std::thread::hardware_concurrency();
  return hardware > 0 ? static_cast<int>(hardware) : 1;
}

}  // namespace sadcbo
