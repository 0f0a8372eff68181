#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

#include "sadcbo/rng.hpp"

namespace sadcbo {

// Negated sum of four Gaussians over [0,1]^6; standard six-dimensional
// Hartmann with the squared deviation in the exponent.  Throws on inputs
// outside the box.
double hartmann6(const Eigen::VectorXd& v);

// Standard five-dimensional Ackley over [-5,5]^5, zero at the origin.
// Throws on inputs outside the box.
double ackley5(const Eigen::VectorXd& v);

enum class BaseFunction { ackley5, hartmann6 };

enum class ContextDistribution { uniform01, beta22, beta_half };

struct ProblemSpec {
  BaseFunction base_function = BaseFunction::ackley5;
  std::vector<int> design_indices;            // base dims treated as designs
  std::vector<int> relevant_context_indices;  // base dims treated as contexts
  int num_irrelevant_contexts = 0;            // extra contexts with zero effect
  ContextDistribution context_distribution = ContextDistribution::uniform01;
  double noise_variance = 1e-3;
  std::uint64_t seed = 0;
};

// Paper-default variable roles (zero-based base dims).
ProblemSpec default_ackley_spec();    // x = {0,1}, z = {2,3,4}, 8 irrelevant
ProblemSpec default_hartmann_spec();  // x = {1,4,5}, z = {0,2,3}, 6 irrelevant

// A maximization problem over the unit cube: designs and relevant contexts
// map onto the base function's native box, irrelevant contexts are ignored,
// and the output is min-max scaled so the base optimum maps to exactly 1.
// Scaling constants are frozen at construction from a quasi-random probe,
// the known optimum, and an analytic upper bound on the raw value.
class Problem {
 public:
  explicit Problem(ProblemSpec spec);

  const ProblemSpec& spec() const { return spec_; }
  int base_dim() const { return base_dim_; }
  int design_dim() const { return static_cast<int>(spec_.design_indices.size()); }
  int num_relevant_contexts() const {
    return static_cast<int>(spec_.relevant_context_indices.size());
  }
  int context_dim() const {
    return num_relevant_contexts() + spec_.num_irrelevant_contexts;
  }
  double true_max() const { return 1.0; }
  double output_low() const { return raw_low_; }
  double output_high() const { return raw_high_; }

  // Noiseless scaled value in [0,1]; x and z live in the unit cube.
  double evaluate_true(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const;
  // Scaled value plus N(0, noise_variance) observation noise.
  double evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                  Rng& noise_rng) const;

 private:
  double raw(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const;

  ProblemSpec spec_;
  int base_dim_ = 0;
  double raw_low_ = 0.0;   // raw value at the known optimum
  double raw_high_ = 1.0;  // raw upper scaling constant
};

Problem make_problem(const ProblemSpec& spec);

// count iid per-coordinate draws from the chosen distribution.
Eigen::VectorXd sample_context(ContextDistribution distribution, int count,
                               Rng& rng);

struct SobolIndices {
  Eigen::VectorXd first_order;
  Eigen::VectorXd total_order;
};

// Saltelli first/total-order sensitivity indices over the unit cube using a
// 2*dim-dimensional quasi-random base sample of n_base rows; the function is
// evaluated n_base * (dim + 2) times.
SobolIndices sobol_indices(const std::function<double(const Eigen::VectorXd&)>& function,
                           int dim, Eigen::Index n_base, std::uint64_t seed);

}  // namespace sadcbo
