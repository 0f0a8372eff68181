#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sadcbo/experiment.hpp"

using nlohmann::json;
using namespace sadcbo;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string error_of(const json& config) {
  try {
    normalize_config(config);
  } catch (const std::invalid_argument& error) {
    return error.what();
  }
  return {};
}

json tiny_config() {
  return json::parse(R"({
    "name": "tiny",
    "trials": 2,
    "budget": 14.0,
    "grid_points": 7,
    "baselines": ["cubo", "vbo", "sadcbo"],
    "problem": {
      "base_function": "ackley5",
      "design_indices": [0, 1, 2, 3],
      "relevant_context_indices": [4],
      "num_irrelevant_contexts": 1,
      "noise_variance": 0.001
    },
    "costs": {"context_cost": 2.0},
    "hyper": {
      "n_init": 3, "q_batch": 2, "max_iterations": 3,
      "fit_restarts": 1, "fit_max_iterations": 10,
      "mc_samples": 64, "raw_candidates": 64, "batch_candidates": 32,
      "refine_steps": 5, "refine_restarts": 1
    }
  })");
}

}  // namespace

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("normalize_config fills defaults keyed on the base function") {
  const json resolved = normalize_config(json::object());
  CHECK(resolved.at("name") == "experiment");
  CHECK(resolved.at("trials") == 20);
  CHECK(resolved.at("budget") == 100.0);
  CHECK(resolved.at("paired") == true);
  CHECK(resolved.at("baselines") == json::array({"SADCBO"}));
  CHECK(resolved.at("problem").at("design_indices") == json::array({0, 1}));
  CHECK(resolved.at("problem").at("relevant_context_indices") ==
        json::array({2, 3, 4}));
  CHECK(resolved.at("problem").at("num_irrelevant_contexts") == 8);
  CHECK(resolved.at("hyper").at("eta") == 0.8);
  CHECK(resolved.at("hyper").at("q_batch") == 10);
  CHECK(resolved.at("costs").at("context_cost") == 3.0);
  CHECK(resolved.at("sweeps") == json::array());

  const json hart =
      normalize_config(json::parse(R"({"problem":{"base_function":"hartmann6"}})"));
  CHECK(hart.at("problem").at("design_indices") == json::array({1, 4, 5}));
  CHECK(hart.at("problem").at("relevant_context_indices") ==
        json::array({0, 2, 3}));
  CHECK(hart.at("problem").at("num_irrelevant_contexts") == 6);
}

TEST_CASE("normalize_config reports every offending path") {
  const std::string message = error_of(json::parse(R"({
    "trails": 3,
    "budget": "lots",
    "hyper": {"etaa": 0.5, "delta": 1.5}
  })"));
  CHECK(message.find("unknown key 'trails'") != std::string::npos);
  CHECK(message.find("expected a number at 'budget'") != std::string::npos);
  CHECK(message.find("unknown key 'hyper.etaa'") != std::string::npos);

  CHECK(error_of(json::parse(R"({"trials": 0})")).find("'trials'") !=
        std::string::npos);
  CHECK(error_of(json::parse(R"({"hyper": {"delta": 1.5}})")).find("'hyper.delta'") !=
        std::string::npos);
  CHECK(error_of(json::parse(R"({"baselines": []})")).find("'baselines'") !=
        std::string::npos);
  CHECK(error_of(json::parse(R"({"baselines": ["frobo"]})")).find("frobo") !=
        std::string::npos);
  CHECK(error_of(json::parse(R"({"costs": {"law": "zipf"}})")).find("'costs.law'") !=
        std::string::npos);
  CHECK(error_of(json::parse(R"({"problem": {"base_function": "sphere"}})"))
            .find("sphere") != std::string::npos);

  const std::string sweep_message = error_of(json::parse(R"({
    "sweeps": [
      {"path": "problem.nope", "values": [1]},
      {"path": "hyper.eta", "values": []}
    ]
  })"));
  CHECK(sweep_message.find("'sweeps[0]'") != std::string::npos);
  CHECK(sweep_message.find("problem.nope") != std::string::npos);
  CHECK(sweep_message.find("'sweeps[1]'") != std::string::npos);
}

TEST_CASE("normalize_config is idempotent and unwraps manifests") {
  const json resolved = normalize_config(tiny_config());
  CHECK(normalize_config(resolved) == resolved);

  json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = resolved;
  manifest["cells"] = json::array();
  manifest["failures"] = json::array();
  CHECK(normalize_config(manifest) == resolved);
}

TEST_CASE("expand_cells takes the cartesian product, first axis slowest") {
  json config = tiny_config();
  config["sweeps"] = json::parse(R"([
    {"path": "problem.num_irrelevant_contexts", "values": [0, 1, 3]},
    {"path": "hyper.eta", "values": [0.5, 0.8]}
  ])");
  const std::vector<SweepCell> cells = expand_cells(normalize_config(config));
  REQUIRE(cells.size() == 6);
  CHECK(cells[0].name == "num_irrelevant_contexts=0_eta=0p5");
  CHECK(cells[1].name == "num_irrelevant_contexts=0_eta=0p8");
  CHECK(cells[5].name == "num_irrelevant_contexts=3_eta=0p8");
  CHECK(cells[3].config.at("problem").at("num_irrelevant_contexts") == 1);
  CHECK(cells[3].config.at("hyper").at("eta") == 0.8);
  for (const SweepCell& cell : cells) CHECK(!cell.config.contains("sweeps"));

  std::set<std::uint64_t> hashes;
  for (const SweepCell& cell : cells) hashes.insert(cell.hash);
  CHECK(hashes.size() == 6);

  const std::vector<SweepCell> single = expand_cells(normalize_config(tiny_config()));
  REQUIRE(single.size() == 1);
  CHECK(single[0].name == "base");
  json stripped = normalize_config(tiny_config());
  stripped.erase("sweeps");
  CHECK(single[0].hash == fnv1a64(stripped.dump()));
}

TEST_CASE("trial seeds pair environment streams across baselines") {
  const TrialSeeds a = trial_seeds(7, 99, 0, BaselineId::sadcbo, true);
  const TrialSeeds b = trial_seeds(7, 99, 0, BaselineId::vbo, true);
  CHECK(a.bundle.context == b.bundle.context);
  CHECK(a.bundle.noise == b.bundle.noise);
  CHECK(a.bundle.init == b.bundle.init);
  CHECK(a.bundle.cost == b.bundle.cost);
  CHECK(a.bundle.acquisition != b.bundle.acquisition);
  CHECK(a.bundle.fit != b.bundle.fit);
  CHECK(a.identity != b.identity);

  const TrialSeeds c = trial_seeds(7, 99, 1, BaselineId::sadcbo, true);
  CHECK(a.bundle.context != c.bundle.context);

  const TrialSeeds d = trial_seeds(7, 99, 0, BaselineId::sadcbo, false);
  const TrialSeeds e = trial_seeds(7, 99, 0, BaselineId::vbo, false);
  CHECK(d.bundle.context != e.bundle.context);
  CHECK(d.identity == a.identity);  // identity ignores pairing
}

TEST_CASE("cost models follow the configured law") {
  json config = normalize_config(tiny_config());

  Rng rng(11);
  const CostModel fixed = cost_model_from(config, 2, rng);
  CHECK(fixed.design_cost == 1.0);
  CHECK(fixed.context_costs.size() == 2);
  CHECK(fixed.context_costs[0] == 2.0);
  CHECK(fixed.context_costs[1] == 2.0);

  config["costs"]["context_costs"] = {0.5, 4.0};
  const CostModel explicit_costs = cost_model_from(config, 2, rng);
  CHECK(explicit_costs.context_costs[0] == 0.5);
  CHECK(explicit_costs.context_costs[1] == 4.0);
  CHECK_THROWS_AS(cost_model_from(config, 3, rng), std::invalid_argument);

  config["costs"]["law"] = "uniform";
  config["costs"]["low"] = 0.5;
  config["costs"]["high"] = 2.0;
  Rng draw_a(42);
  Rng draw_b(42);
  const CostModel random_a = cost_model_from(config, 4, draw_a);
  const CostModel random_b = cost_model_from(config, 4, draw_b);
  for (int j = 0; j < 4; ++j) {
    CHECK(random_a.context_costs[j] >= 0.5);
    CHECK(random_a.context_costs[j] <= 2.0);
    CHECK(random_a.context_costs[j] == random_b.context_costs[j]);
  }
  CHECK(random_a.context_costs.minCoeff() < random_a.context_costs.maxCoeff());
}

TEST_CASE("results CSV round-trips every field") {
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "sadcbo-roundtrip.csv";

  std::vector<ResultRecord> records(2);
  records[0].t = 1;
  records[0].cumulative_cost = 1.0 / 3.0;
  records[0].y_best = 0.12345678901234567;
  records[0].phase = 0;
  records[0].selected_mask = (1ull << 63) | 5ull;
  records[0].delta_r_bound = std::numeric_limits<double>::quiet_NaN();
  records[0].s_threshold = std::numeric_limits<double>::quiet_NaN();
  records[0].baseline = "sadcbo";
  records[0].trial = 0;
  records[0].seed = 18446744073709551615ull;
  records[1] = records[0];
  records[1].t = 2;
  records[1].phase = 1;
  records[1].delta_r_bound = 0.25;
  records[1].s_threshold = 1e-300;

  write_results_csv(path, records);
  const std::vector<ResultRecord> loaded = read_results_csv(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].t == 1);
  CHECK(loaded[0].cumulative_cost == records[0].cumulative_cost);
  CHECK(loaded[0].y_best == records[0].y_best);
  CHECK(loaded[0].selected_mask == records[0].selected_mask);
  CHECK(std::isnan(loaded[0].delta_r_bound));
  CHECK(std::isnan(loaded[0].s_threshold));
  CHECK(loaded[0].baseline == "sadcbo");
  CHECK(loaded[0].seed == records[0].seed);
  CHECK(loaded[1].phase == 1);
  CHECK(loaded[1].delta_r_bound == 0.25);
  CHECK(loaded[1].s_threshold == 1e-300);

  std::ofstream bad(path, std::ios::binary);
  bad << "t,foo\n1,2\n";
  bad.close();
  CHECK_THROWS_AS(read_results_csv(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("run_experiment writes deterministic per-cell artifacts") {
  const std::filesystem::path root =
      std::filesystem::temp_directory_path() / "sadcbo-exp-tests";
  std::filesystem::remove_all(root);

  const json config = tiny_config();
  const ExperimentOutcome first = run_experiment(config, root / "a", 2);
  CHECK(first.cells == 1);
  CHECK(first.trials == 6);  // 3 baselines x 2 trials
  CHECK(first.failures.empty());

  const std::filesystem::path cell = root / "a" / "base";
  REQUIRE(std::filesystem::exists(cell / "results.csv"));
  REQUIRE(std::filesystem::exists(cell / "summary.csv"));
  REQUIRE(std::filesystem::exists(cell / "inclusion.csv"));
  REQUIRE(std::filesystem::exists(cell / "switch.csv"));
  REQUIRE(std::filesystem::exists(root / "a" / "manifest.json"));

  const std::vector<ResultRecord> records = read_results_csv(cell / "results.csv");
  // Every trial runs 3 initialization rows plus max_iterations steps except
  // vbo, whose all-context step cost of 5 exhausts the budget after 2 steps.
  int cubo_rows = 0;
  int vbo_rows = 0;
  for (const ResultRecord& record : records) {
    if (record.baseline == "CUBO" && record.trial == 0) ++cubo_rows;
    if (record.baseline == "VBO" && record.trial == 0) ++vbo_rows;
  }
  CHECK(cubo_rows == 6);
  CHECK(vbo_rows == 5);

  // Forced-interventional vbo selects both contexts from the first step on.
  const std::string inclusion = read_file(cell / "inclusion.csv");
  CHECK(inclusion.find("VBO,4,0,1,2\n") != std::string::npos);
  CHECK(inclusion.find("VBO,4,1,1,2\n") != std::string::npos);

  const std::string switches = read_file(cell / "switch.csv");
  CHECK(switches.find("VBO,0,4,") != std::string::npos);
  CHECK(switches.find("CUBO,0,-1,nan") != std::string::npos);

  SUBCASE("rerunning the config reproduces the bytes") {
    run_experiment(config, root / "b", 2);
    CHECK(read_file(root / "b" / "base" / "results.csv") ==
          read_file(cell / "results.csv"));
    CHECK(read_file(root / "b" / "base" / "summary.csv") ==
          read_file(cell / "summary.csv"));
    CHECK(read_file(root / "b" / "manifest.json") ==
          read_file(root / "a" / "manifest.json"));
  }

  SUBCASE("rerunning from the manifest reproduces the bytes") {
    std::ifstream in(root / "a" / "manifest.json");
    const json manifest = json::parse(in);
    run_experiment(manifest, root / "c", 1);
    CHECK(read_file(root / "c" / "base" / "results.csv") ==
          read_file(cell / "results.csv"));
  }

  SUBCASE("summarize recomputes identical tables from the raw log") {
    const std::string summary_before = read_file(cell / "summary.csv");
    const std::string inclusion_before = read_file(cell / "inclusion.csv");
    const std::string switch_before = read_file(cell / "switch.csv");
    const std::string report = summarize_directory(root / "a");
    CHECK(report.find("base:") != std::string::npos);
    CHECK(report.find("CUBO") != std::string::npos);
    CHECK(read_file(cell / "summary.csv") == summary_before);
    CHECK(read_file(cell / "inclusion.csv") == inclusion_before);
    CHECK(read_file(cell / "switch.csv") == switch_before);
  }
}

TEST_CASE("run_experiment rejects invalid sweep values upfront") {
  json config = tiny_config();
  config["sweeps"] = json::parse(
      R"([{"path": "hyper.n_init", "values": [3, 0]}])");
  const std::filesystem::path root =
      std::filesystem::temp_directory_path() / "sadcbo-exp-invalid";
  std::filesystem::remove_all(root);
  CHECK_THROWS_AS(run_experiment(config, root, 1), std::invalid_argument);
  CHECK(!std::filesystem::exists(root / "manifest.json"));
}

TEST_CASE("sobol_report labels dimensions by their role") {
  const std::string report = sobol_report("hartmann6", 256, 3);
  CHECK(report.find("z(1)") != std::string::npos);
  CHECK(report.find("x(2)") != std::string::npos);
  CHECK(report.find("z(3)") != std::string::npos);
  CHECK(report.find("z(4)") != std::string::npos);
  CHECK(report.find("x(5)") != std::string::npos);
  CHECK(report.find("x(6)") != std::string::npos);
  CHECK(report.find("first-order sums") != std::string::npos);
  CHECK_THROWS_AS(sobol_report("rosenbrock", 64, 1), std::invalid_argument);
}
