#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "sadcbo/gp.hpp"
#include "sadcbo/rng.hpp"

using namespace sadcbo;

namespace {

// Independent dense RBF kernel (product composition), written directly from
// the closed form rather than through GpModel, for oracle computations.
double oracle_rbf(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                  const std::vector<Eigen::Index>& cols, const Eigen::VectorXd& ell,
                  double sigma2) {
  double q = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const double d = (a[cols[i]] - b[cols[i]]) / ell[static_cast<Eigen::Index>(i)];
    q += d * d;
  }
  return sigma2 * std::exp(-0.5 * q);
}

Eigen::MatrixXd oracle_kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                     const std::vector<Eigen::Index>& cols,
                                     const Eigen::VectorXd& ell, double sigma2) {
  Eigen::MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      K(i, j) = oracle_rbf(A.row(i), B.row(j), cols, ell, sigma2);
    }
  }
  return K;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = rng.uniform();
  }
  return M;
}

KernelSpec unit_spec(int dims, double noise = 1e-3) {
  KernelSpec spec;
  spec.lengthscales = Eigen::VectorXd::Ones(dims);
  spec.signal_variance = 1.0;
  spec.noise_variance = noise;
  return spec;
}

std::vector<Eigen::Index> all_cols(int dims) {
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(dims));
  for (int i = 0; i < dims; ++i) cols[static_cast<std::size_t>(i)] = i;
  return cols;
}

}  // namespace

TEST_CASE("kernel closed-form anchors") {
  KernelSpec spec = unit_spec(1);
  GpModel model(spec, {0}, 1);
  Eigen::VectorXd a(1), b(1);
  a << 0.3;
  b << 0.3;
  CHECK(model.kernel_eval(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  b << 1.3;
  CHECK(model.kernel_eval(a, b) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  KernelSpec add = unit_spec(2);
  add.composition = KernelComposition::additive;
  add.signal_variance = 1.7;
  GpModel amodel(add, {0, 1}, 1);
  Eigen::VectorXd p(2);
  p << 0.2, 0.9;
  CHECK(amodel.kernel_eval(p, p) == doctest::Approx(2.0 * 1.7).epsilon(1e-12));
}

TEST_CASE("kernel is symmetric and the matrix is PSD") {
  Rng rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const int dims = 1 + static_cast<int>(rng.uniform_int(4));
    KernelSpec spec = unit_spec(dims);
    for (int i = 0; i < dims; ++i) spec.lengthscales[i] = 0.2 + rng.uniform();
    spec.signal_variance = 0.5 + rng.uniform();
    GpModel model(spec, all_cols(dims), dims);
    const Eigen::MatrixXd X = random_matrix(rng, 12, dims);
    const Eigen::MatrixXd K = model.kernel_matrix(X, X);
    CHECK((K - K.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    CHECK(eig.eigenvalues().minCoeff() > -1e-8);
  }
}

TEST_CASE("empty model recovers the prior") {
  KernelSpec spec = unit_spec(2);
  GpModel model(spec, {0, 1}, 2);
  Rng rng(7);
  const Eigen::MatrixXd Q = random_matrix(rng, 4, 2);
  const GaussianMoments mom = model.posterior(Q);
  CHECK(mom.mean.lpNorm<Eigen::Infinity>() == 0.0);
  const Eigen::MatrixXd Kq = model.kernel_matrix(Q, Q);
  CHECK((mom.covariance - Kq).lpNorm<Eigen::Infinity>() < 1e-12);
  const auto [pm, pv] = model.predictive(Q.row(0));
  CHECK(pm == 0.0);
  CHECK(pv == doctest::Approx(1.0 + spec.noise_variance).epsilon(1e-12));
}

TEST_CASE("posterior matches brute-force joint-Gaussian conditioning") {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dims = 1 + static_cast<int>(rng.uniform_int(3));
    const int n = 1 + static_cast<int>(rng.uniform_int(8));
    const int m = 1 + static_cast<int>(rng.uniform_int(3));
    KernelSpec spec = unit_spec(dims);
    for (int i = 0; i < dims; ++i) spec.lengthscales[i] = 0.15 + rng.uniform();
    spec.signal_variance = 0.3 + 2.0 * rng.uniform();
    spec.noise_variance = 1e-3 + 0.01 * rng.uniform();
    const Eigen::MatrixXd X = random_matrix(rng, n, dims);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = 2.0 * rng.uniform() - 1.0;
    const Eigen::MatrixXd Q = random_matrix(rng, m, dims);

    const GpModel model = GpModel::condition(spec, all_cols(dims), dims, X, y);
    const GaussianMoments got = model.posterior(Q);

    const Eigen::MatrixXd Kxx =
        oracle_kernel_matrix(X, X, all_cols(dims), spec.lengthscales, spec.signal_variance);
    const Eigen::MatrixXd Kxq =
        oracle_kernel_matrix(X, Q, all_cols(dims), spec.lengthscales, spec.signal_variance);
    const Eigen::MatrixXd Kqq =
        oracle_kernel_matrix(Q, Q, all_cols(dims), spec.lengthscales, spec.signal_variance);
    const Eigen::MatrixXd Ky =
        Kxx + spec.noise_variance * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd Kinv = Eigen::FullPivLU<Eigen::MatrixXd>(Ky).inverse();
    const Eigen::VectorXd mean = Kxq.transpose() * Kinv * y;
    const Eigen::MatrixXd cov = Kqq - Kxq.transpose() * Kinv * Kxq;

    worst = std::max(worst, (got.mean - mean).lpNorm<Eigen::Infinity>());
    worst = std::max(worst, (got.covariance - cov).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("noiseless interpolation limit") {
  KernelSpec spec = unit_spec(1, 1e-12);
  Eigen::MatrixXd X(3, 1);
  X << 0.1, 0.5, 0.9;
  Eigen::VectorXd y(3);
  y << -0.3, 0.8, 0.2;
  const GpModel model = GpModel::condition(spec, {0}, 1, X, y);
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0, var = 0.0;
    model.latent(X.row(i), mean, var);
    CHECK(mean == doctest::Approx(y[i]).epsilon(1e-6));
    CHECK(var < 1e-8);
  }
}

TEST_CASE("predictive equals posterior diagonal plus noise") {
  Rng rng(55);
  KernelSpec spec = unit_spec(2);
  const Eigen::MatrixXd X = random_matrix(rng, 9, 2);
  Eigen::VectorXd y(9);
  for (int i = 0; i < 9; ++i) y[i] = rng.normal();
  const GpModel model = GpModel::condition(spec, {0, 1}, 2, X, y);
  const Eigen::MatrixXd Q = random_matrix(rng, 10, 2);
  const GaussianMoments mom = model.posterior(Q);
  for (int i = 0; i < 10; ++i) {
    const auto [pm, pv] = model.predictive(Q.row(i));
    CHECK(std::abs(pm - mom.mean[i]) < 1e-12);
    CHECK(std::abs(pv - (mom.covariance(i, i) + spec.noise_variance)) < 1e-12);
  }
}

TEST_CASE("adding data never increases latent variance") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const int dims = 1 + static_cast<int>(rng.uniform_int(3));
    KernelSpec spec = unit_spec(dims);
    for (int i = 0; i < dims; ++i) spec.lengthscales[i] = 0.2 + rng.uniform();
    const int n = 3 + static_cast<int>(rng.uniform_int(6));
    const Eigen::MatrixXd X = random_matrix(rng, n, dims);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = rng.normal();
    const GpModel small =
        GpModel::condition(spec, all_cols(dims), dims, X.topRows(n - 1), y.head(n - 1));
    const GpModel big = GpModel::condition(spec, all_cols(dims), dims, X, y);
    const Eigen::MatrixXd Q = random_matrix(rng, 6, dims);
    for (int i = 0; i < 6; ++i) {
      double m0 = 0.0, v0 = 0.0, m1 = 0.0, v1 = 0.0;
      small.latent(Q.row(i), m0, v0);
      big.latent(Q.row(i), m1, v1);
      CHECK(v1 <= v0 + 1e-8);
    }
  }
}

TEST_CASE("log marginal likelihood anchors and dense oracle") {
  KernelSpec spec = unit_spec(1);
  Eigen::MatrixXd X1(1, 1);
  X1 << 0.4;
  Eigen::VectorXd y1(1);
  y1 << 0.0;
  const GpModel one = GpModel::condition(spec, {0}, 1, X1, y1);
  CHECK(one.log_marginal_likelihood() ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI * (1.0 + spec.noise_variance)))
            .epsilon(1e-12));

  Rng rng(31);
  KernelSpec spec2 = unit_spec(2);
  spec2.lengthscales << 0.5, 0.7;
  spec2.signal_variance = 1.3;
  const Eigen::MatrixXd X = random_matrix(rng, 6, 2);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) y[i] = rng.normal();
  const GpModel model = GpModel::condition(spec2, {0, 1}, 2, X, y);

  const Eigen::MatrixXd K =
      oracle_kernel_matrix(X, X, {0, 1}, spec2.lengthscales, spec2.signal_variance) +
      spec2.noise_variance * Eigen::MatrixXd::Identity(6, 6);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  const double oracle = -0.5 * y.dot(lu.solve(y)) -
                        0.5 * std::log(lu.determinant()) -
                        3.0 * std::log(2.0 * M_PI);
  CHECK(model.log_marginal_likelihood() == doctest::Approx(oracle).epsilon(1e-8));

  // Permutation invariance.
  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Eigen::MatrixXd Xp(6, 2);
  Eigen::VectorXd yp(6);
  for (int i = 0; i < 6; ++i) {
    Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
    yp[i] = y[perm[static_cast<std::size_t>(i)]];
  }
  const GpModel permuted = GpModel::condition(spec2, {0, 1}, 2, Xp, yp);
  CHECK(std::abs(permuted.log_marginal_likelihood() - model.log_marginal_likelihood()) <
        1e-10);
}

TEST_CASE("joint samples converge to posterior moments and are reproducible") {
  Rng rng(13);
  KernelSpec spec = unit_spec(1);
  Eigen::MatrixXd X(4, 1);
  X << 0.1, 0.35, 0.6, 0.95;
  Eigen::VectorXd y(4);
  y << 0.2, -0.1, 0.7, 0.3;
  const GpModel model = GpModel::condition(spec, {0}, 1, X, y);
  Eigen::MatrixXd Q(3, 1);
  Q << 0.2, 0.5, 0.8;
  const GaussianMoments mom = model.posterior(Q);
  const int n_samples = 4096;
  const Eigen::MatrixXd samples = model.joint_sample(Q, n_samples, 999);
  const Eigen::MatrixXd again = model.joint_sample(Q, n_samples, 999);
  CHECK(samples == again);
  for (int i = 0; i < 3; ++i) {
    const double emp_mean = samples.col(i).mean();
    const double std_err = std::sqrt(mom.covariance(i, i) / n_samples);
    CHECK(std::abs(emp_mean - mom.mean[i]) <= 3.0 * std_err + 1e-12);
  }
}

TEST_CASE("joint samples collapse to the mean at a noiseless training point") {
  KernelSpec spec = unit_spec(1, 1e-13);
  Eigen::MatrixXd X(1, 1);
  X << 0.5;
  Eigen::VectorXd y(1);
  y << 0.42;
  const GpModel model = GpModel::condition(spec, {0}, 1, X, y);
  const Eigen::MatrixXd samples = model.joint_sample(X, 64, 1);
  for (int s = 0; s < 64; ++s) {
    CHECK(samples(s, 0) == doctest::Approx(0.42).epsilon(1e-5));
  }
}

TEST_CASE("kl_univariate closed forms") {
  CHECK(kl_univariate(0.0, 1.0, 0.0, 1.0) == 0.0);
  CHECK(kl_univariate(0.0, 1.0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl_univariate(0.0, 2.0, 0.0, 1.0) ==
        doctest::Approx(0.5 * (2.0 - 1.0 - std::log(2.0))).epsilon(1e-12));
  CHECK_THROWS_AS(kl_univariate(0.0, 0.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("kl_multivariate decomposes and matches the dense formula") {
  GaussianMoments p, q;
  p.mean = Eigen::VectorXd::Zero(3);
  q.mean = (Eigen::VectorXd(3) << 0.3, -0.2, 0.1).finished();
  p.covariance = (Eigen::VectorXd(3) << 0.5, 1.0, 2.0).finished().asDiagonal();
  q.covariance = (Eigen::VectorXd(3) << 1.0, 0.7, 1.5).finished().asDiagonal();
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    expected += kl_univariate(p.mean[i], p.covariance(i, i), q.mean[i], q.covariance(i, i));
  }
  CHECK(kl_multivariate(p, q) == doctest::Approx(expected).epsilon(1e-10));
  CHECK(kl_multivariate(p, p) == doctest::Approx(0.0).epsilon(1e-12));

  // Random correlated case against the direct trace/logdet evaluation.
  Rng rng(19);
  Eigen::MatrixXd A = random_matrix(rng, 3, 3);
  Eigen::MatrixXd B = random_matrix(rng, 3, 3);
  GaussianMoments pr, qr;
  pr.mean = (Eigen::VectorXd(3) << rng.normal(), rng.normal(), rng.normal()).finished();
  qr.mean = (Eigen::VectorXd(3) << rng.normal(), rng.normal(), rng.normal()).finished();
  pr.covariance = A * A.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3);
  qr.covariance = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd qinv = qr.covariance.inverse();
  const Eigen::VectorXd d = qr.mean - pr.mean;
  const double dense = 0.5 * ((qinv * pr.covariance).trace() + d.dot(qinv * d) - 3.0 +
                              std::log(qr.covariance.determinant() /
                                       pr.covariance.determinant()));
  CHECK(kl_multivariate(pr, qr) == doctest::Approx(dense).epsilon(1e-8));
  GaussianMoments two;
  two.mean = Eigen::VectorXd::Zero(2);
  two.covariance = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(kl_multivariate(pr, two), std::invalid_argument);
}

TEST_CASE("fit recovers a known lengthscale on most seeds") {
  const double true_ell = 0.2;
  int hits = 0;
  const int n_seeds = 20;
  for (int seed = 0; seed < n_seeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 500);
    KernelSpec truth = unit_spec(1);
    truth.lengthscales << true_ell;
    const GpModel prior(truth, {0}, 1);
    Eigen::MatrixXd X = random_matrix(rng, 40, 1);
    const Eigen::MatrixXd f = prior.joint_sample(X, 1, derive_seed(77, {static_cast<std::uint64_t>(seed)}));
    Eigen::VectorXd y = f.row(0).transpose();
    for (int i = 0; i < 40; ++i) y[i] += std::sqrt(truth.noise_variance) * rng.normal();
    FitConfig cfg;
    cfg.restarts = 3;
    cfg.max_iterations = 60;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const GpModel fitted = GpModel::fit(unit_spec(1), {0}, 1, X, y, cfg);
    if (std::abs(std::log(fitted.spec().lengthscales[0]) - std::log(true_ell)) <= 0.5) {
      ++hits;
    }
  }
  CHECK(hits >= 16);
}

TEST_CASE("fit drives signal variance down on constant data and beats unit start") {
  Rng rng(23);
  Eigen::MatrixXd X = random_matrix(rng, 15, 2);
  const Eigen::VectorXd y_const = Eigen::VectorXd::Zero(15);
  FitConfig cfg;
  cfg.seed = 4;
  const GpModel flat = GpModel::fit(unit_spec(2), {0, 1}, 2, X, y_const, cfg);
  CHECK(flat.spec().signal_variance <= 0.02);

  Eigen::VectorXd y(15);
  for (int i = 0; i < 15; ++i) y[i] = std::sin(8.0 * X(i, 0)) + 0.3 * rng.normal();
  const GpModel fitted = GpModel::fit(unit_spec(2), {0, 1}, 2, X, y, cfg);
  const GpModel unit = GpModel::condition(unit_spec(2), {0, 1}, 2, X, y);
  CHECK(fitted.log_marginal_likelihood() >= unit.log_marginal_likelihood() - 1e-9);

  const GpModel fitted_again = GpModel::fit(unit_spec(2), {0, 1}, 2, X, y, cfg);
  CHECK(fitted.spec().lengthscales == fitted_again.spec().lengthscales);
  CHECK(fitted.spec().signal_variance == fitted_again.spec().signal_variance);
}

TEST_CASE("contract violations raise") {
  KernelSpec bad = unit_spec(2);
  bad.lengthscales[1] = -1.0;
  CHECK_THROWS_AS(GpModel(bad, {0, 1}, 2), std::invalid_argument);
  KernelSpec spec = unit_spec(2);
  CHECK_THROWS_AS(GpModel(spec, {1, 0}, 2), std::invalid_argument);
  GpModel model(spec, {0, 1}, 2);
  Eigen::VectorXd a(2), b(3);
  a << 0.1, 0.2;
  b << 0.1, 0.2, 0.3;
  CHECK_THROWS_AS(model.kernel_eval(a, b), std::invalid_argument);
  CHECK_THROWS_AS(model.log_marginal_likelihood(), std::runtime_error);
}
