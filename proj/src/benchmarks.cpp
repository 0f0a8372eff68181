#include "sadcbo/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "sadcbo/quasirandom.hpp"

namespace sadcbo {

namespace {

constexpr double kHartmannAlpha[4] = {1.0, 1.2, 3.0, 3.2};

constexpr double kHartmannA[4][6] = {
    {10.0, 3.0, 17.0, 3.5, 1.7, 8.0},
    {0.05, 10.0, 17.0, 0.1, 8.0, 14.0},
    {3.0, 3.5, 1.7, 10.0, 17.0, 8.0},
    {17.0, 8.0, 0.05, 10.0, 0.1, 14.0},
};

constexpr double kHartmannP[4][6] = {
    {0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
    {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
    {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
    {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381},
};

// Known global minimizer of the six-dimensional Hartmann function.
const Eigen::VectorXd& hartmann_minimizer() {
  static const Eigen::VectorXd v = [] {
    Eigen::VectorXd p(6);
    p << 0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573;
    return p;
  }();
  return v;
}

int base_dimension(BaseFunction function) {
  return function == BaseFunction::ackley5 ? 5 : 6;
}

double raw_native(BaseFunction function, const Eigen::VectorXd& unit) {
  if (function == BaseFunction::ackley5) {
    return ackley5((unit.array() * 10.0 - 5.0).matrix());
  }
  return hartmann6(unit);
}

struct OutputScale {
  double low = 0.0;
  double high = 1.0;
};

// Raw value at the base function's optimum plus an upper scaling constant.
// The upper constant is the larger of a dense quasi-random probe (with all
// box corners) and a termwise analytic bound, so scaled values of unseen
// points cannot escape [0,1].
OutputScale probe_output_scale(BaseFunction function) {
  const int dim = base_dimension(function);
  OutputScale scale;
  scale.low = function == BaseFunction::ackley5
                  ? ackley5(Eigen::VectorXd::Zero(5))
                  : hartmann6(hartmann_minimizer());

  double probe_max = -std::numeric_limits<double>::infinity();
  SobolSequence sequence(dim);
  Eigen::VectorXd unit(dim);
  const Eigen::Index n_probe = Eigen::Index{1} << 20;
  for (Eigen::Index i = 0; i < n_probe; ++i) {
    unit = sequence.next();
    probe_max = std::max(probe_max, raw_native(function, unit));
  }
  for (int mask = 0; mask < (1 << dim); ++mask) {
    for (int j = 0; j < dim; ++j) unit[j] = (mask >> j) & 1 ? 1.0 : 0.0;
    probe_max = std::max(probe_max, raw_native(function, unit));
  }

  const double e1 = std::exp(1.0);
  const double analytic_cap = function == BaseFunction::ackley5
                                  ? 20.0 + e1 - 20.0 / e1 - 1.0 / e1
                                  : 0.0;
  scale.high = std::max(probe_max, analytic_cap);
  return scale;
}

const OutputScale& output_scale(BaseFunction function) {
  if (function == BaseFunction::ackley5) {
    static const OutputScale scale = probe_output_scale(BaseFunction::ackley5);
    return scale;
  }
  static const OutputScale scale = probe_output_scale(BaseFunction::hartmann6);
  return scale;
}

void check_unit_box(const Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0)) {
      throw std::invalid_argument(std::string(what) +
                                  ": coordinates must lie in [0,1]");
    }
  }
}

}  // namespace

double hartmann6(const Eigen::VectorXd& v) {
  if (v.size() != 6) {
    throw std::invalid_argument("hartmann6: expected a 6-dimensional input");
  }
  check_unit_box(v, "hartmann6");
  double value = 0.0;
  for (int i = 0; i < 4; ++i) {
    double exponent = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double d = v[j] - kHartmannP[i][j];
      exponent += kHartmannA[i][j] * d * d;
    }
    value -= kHartmannAlpha[i] * std::exp(-exponent);
  }
  return value;
}

double ackley5(const Eigen::VectorXd& v) {
  if (v.size() != 5) {
    throw std::invalid_argument("ackley5: expected a 5-dimensional input");
  }
  for (Eigen::Index i = 0; i < 5; ++i) {
    if (!(v[i] >= -5.0 && v[i] <= 5.0)) {
      throw std::invalid_argument("ackley5: coordinates must lie in [-5,5]");
    }
  }
  const double mean_square = v.squaredNorm() / 5.0;
  double mean_cos = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) mean_cos += std::cos(2.0 * M_PI * v[i]);
  mean_cos /= 5.0;
  // Grouped so the value at the origin is exactly zero.
  return (20.0 - 20.0 * std::exp(-0.2 * std::sqrt(mean_square))) +
         (std::exp(1.0) - std::exp(mean_cos));
}

ProblemSpec default_ackley_spec() {
  ProblemSpec spec;
  spec.base_function = BaseFunction::ackley5;
  spec.design_indices = {0, 1};
  spec.relevant_context_indices = {2, 3, 4};
  spec.num_irrelevant_contexts = 8;
  return spec;
}

ProblemSpec default_hartmann_spec() {
  ProblemSpec spec;
  spec.base_function = BaseFunction::hartmann6;
  spec.design_indices = {1, 4, 5};
  spec.relevant_context_indices = {0, 2, 3};
  spec.num_irrelevant_contexts = 6;
  return spec;
}

Problem::Problem(ProblemSpec spec) : spec_(std::move(spec)) {
  base_dim_ = base_dimension(spec_.base_function);
  std::vector<int> combined = spec_.design_indices;
  combined.insert(combined.end(), spec_.relevant_context_indices.begin(),
                  spec_.relevant_context_indices.end());
  std::sort(combined.begin(), combined.end());
  bool valid = static_cast<int>(combined.size()) == base_dim_;
  for (int i = 0; valid && i < base_dim_; ++i) valid = combined[static_cast<std::size_t>(i)] == i;
  if (!valid) {
    throw std::invalid_argument(
        "Problem: design and relevant context indices must partition the base dims");
  }
  if (spec_.num_irrelevant_contexts < 0) {
    throw std::invalid_argument("Problem: negative irrelevant context count");
  }
  if (spec_.noise_variance < 0.0) {
    throw std::invalid_argument("Problem: negative noise variance");
  }
  const OutputScale& scale = output_scale(spec_.base_function);
  raw_low_ = scale.low;
  raw_high_ = scale.high;
}

double Problem::raw(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const {
  if (x.size() != design_dim() || z.size() != context_dim()) {
    throw std::invalid_argument("Problem: design/context size mismatch");
  }
  check_unit_box(x, "Problem design");
  check_unit_box(z, "Problem context");
  Eigen::VectorXd unit(base_dim_);
  for (int i = 0; i < design_dim(); ++i) {
    unit[spec_.design_indices[static_cast<std::size_t>(i)]] = x[i];
  }
  for (int j = 0; j < num_relevant_contexts(); ++j) {
    unit[spec_.relevant_context_indices[static_cast<std::size_t>(j)]] = z[j];
  }
  return raw_native(spec_.base_function, unit);
}

double Problem::evaluate_true(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& z) const {
  return (raw_high_ - raw(x, z)) / (raw_high_ - raw_low_);
}

double Problem::evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                         Rng& noise_rng) const {
  return evaluate_true(x, z) + std::sqrt(spec_.noise_variance) * noise_rng.normal();
}

Problem make_problem(const ProblemSpec& spec) { return Problem(spec); }

Eigen::VectorXd sample_context(ContextDistribution distribution, int count,
                               Rng& rng) {
  if (count < 0) throw std::invalid_argument("sample_context: negative count");
  Eigen::VectorXd z(count);
  for (int i = 0; i < count; ++i) {
    switch (distribution) {
      case ContextDistribution::uniform01:
        z[i] = rng.uniform();
        break;
      case ContextDistribution::beta22:
        z[i] = rng.beta22();
        break;
      case ContextDistribution::beta_half:
        z[i] = rng.beta_half();
        break;
    }
  }
  return z;
}

SobolIndices sobol_indices(const std::function<double(const Eigen::VectorXd&)>& function,
                           int dim, Eigen::Index n_base, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("sobol_indices: dim must be positive");
  if (n_base < 2) throw std::invalid_argument("sobol_indices: need at least two rows");
  if (n_base < 1024) {
    std::cerr << "sobol_indices: base sample count " << n_base
              << " is small; estimates will be noisy\n";
  }

  SobolSequence sequence(2 * dim, seed);
  Eigen::VectorXd f_a(n_base);
  Eigen::VectorXd f_b(n_base);
  Eigen::MatrixXd f_ab(n_base, dim);
  Eigen::VectorXd point(dim);
  for (Eigen::Index i = 0; i < n_base; ++i) {
    const Eigen::VectorXd row = sequence.next();
    const auto a = row.head(dim);
    const auto b = row.tail(dim);
    f_a[i] = function(a);
    f_b[i] = function(b);
    for (int j = 0; j < dim; ++j) {
      point = a;
      point[j] = b[j];
      f_ab(i, j) = function(point);
    }
  }

  const auto n = static_cast<double>(n_base);
  const double mean = (f_a.sum() + f_b.sum()) / (2.0 * n);
  const double variance =
      (f_a.squaredNorm() + f_b.squaredNorm()) / (2.0 * n) - mean * mean;

  SobolIndices indices;
  indices.first_order = Eigen::VectorXd::Zero(dim);
  indices.total_order = Eigen::VectorXd::Zero(dim);
  if (variance <= 0.0) return indices;  // constant function
  for (int j = 0; j < dim; ++j) {
    indices.first_order[j] =
        (f_b.cwiseProduct(f_ab.col(j) - f_a)).mean() / variance;
    indices.total_order[j] =
        (f_a - f_ab.col(j)).squaredNorm() / n / (2.0 * variance);
  }
  return indices;
}

}  // namespace sadcbo
