#include "sadcbo/gp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>

#include "sadcbo/rng.hpp"

namespace sadcbo {
namespace {

std::atomic<long> g_variance_clamps{0};

void validate_spec(const KernelSpec& spec, std::size_t active_count) {
  if (spec.lengthscales.size() != static_cast<Eigen::Index>(active_count)) {
    throw std::invalid_argument("KernelSpec: lengthscale count != active column count");
  }
  if ((spec.lengthscales.array() <= 0.0).any()) {
    throw std::invalid_argument("KernelSpec: lengthscales must be positive");
  }
  if (spec.signal_variance <= 0.0 || spec.noise_variance <= 0.0) {
    throw std::invalid_argument("KernelSpec: variances must be positive");
  }
}

void validate_columns(const std::vector<Eigen::Index>& cols, int design_columns) {
  if (design_columns < 0 || static_cast<std::size_t>(design_columns) > cols.size()) {
    throw std::invalid_argument("GpModel: design column count out of range");
  }
  for (std::size_t i = 1; i < cols.size(); ++i) {
    if (cols[i] <= cols[i - 1]) {
      throw std::invalid_argument("GpModel: active columns must be strictly increasing");
    }
  }
  if (!cols.empty() && cols.front() < 0) {
    throw std::invalid_argument("GpModel: negative active column");
  }
}

// Two-loop L-BFGS direction from the stored (s, y) pairs.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& grad,
                                const std::deque<Eigen::VectorXd>& s_hist,
                                const std::deque<Eigen::VectorXd>& y_hist) {
  Eigen::VectorXd q = grad;
  const std::size_t m = s_hist.size();
  std::vector<double> alpha(m), rho(m);
  for (std::size_t i = m; i-- > 0;) {
    rho[i] = 1.0 / y_hist[i].dot(s_hist[i]);
    alpha[i] = rho[i] * s_hist[i].dot(q);
    q -= alpha[i] * y_hist[i];
  }
  if (m > 0) {
    const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    q *= gamma;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double beta = rho[i] * y_hist[i].dot(q);
    q += (alpha[i] - beta) * s_hist[i];
  }
  return -q;
}

Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

// Box-constrained minimization: L-BFGS search directions, backtracking Armijo
// line search on the projected step, gradient-direction fallback.
double lbfgs_box_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& eval,
    const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, Eigen::VectorXd& theta,
    int max_iterations, double tolerance, double* initial_value) {
  Eigen::VectorXd grad(theta.size()), grad_new(theta.size());
  double f = eval(theta, grad);
  if (initial_value != nullptr) *initial_value = f;
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  const std::size_t history = 8;
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Eigen::VectorXd projected_step = clamp_to_box(theta - grad, lo, hi) - theta;
    if (projected_step.lpNorm<Eigen::Infinity>() < tolerance) break;
    Eigen::VectorXd dir = lbfgs_direction(grad, s_hist, y_hist);
    if (dir.dot(grad) > -1e-12 * dir.norm() * grad.norm()) dir = -grad;
    bool accepted = false;
    Eigen::VectorXd theta_new;
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double t = (iter == 0 || attempt == 1)
                     ? std::min(1.0, 1.0 / std::max(1e-12, dir.lpNorm<Eigen::Infinity>()))
                     : 1.0;
      for (int ls = 0; ls < 40; ++ls) {
        theta_new = clamp_to_box(theta + t * dir, lo, hi);
        const Eigen::VectorXd step = theta_new - theta;
        if (step.lpNorm<Eigen::Infinity>() < 1e-14) break;
        f_new = eval(theta_new, grad_new);
        if (std::isfinite(f_new) && f_new <= f + 1e-4 * grad.dot(step)) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted && attempt == 0) {
        dir = -grad;  // retry once along the projected gradient
        s_hist.clear();
        y_hist.clear();
      }
    }
    if (!accepted) break;
    const Eigen::VectorXd s = theta_new - theta;
    const Eigen::VectorXd yv = grad_new - grad;
    if (s.dot(yv) > 1e-10 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      if (s_hist.size() > history) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    theta = theta_new;
    f = f_new;
    grad = grad_new;
  }
  return f;
}

}  // namespace

long variance_clamp_count() { return g_variance_clamps.load(); }

GpModel::GpModel(KernelSpec spec, std::vector<Eigen::Index> active_columns,
                 int design_columns)
    : spec_(std::move(spec)),
      active_columns_(std::move(active_columns)),
      design_columns_(design_columns) {
  validate_columns(active_columns_, design_columns_);
  validate_spec(spec_, active_columns_.size());
  X_.resize(0, 0);
  y_.resize(0);
}

GpModel GpModel::condition(KernelSpec spec, std::vector<Eigen::Index> active_columns,
                           int design_columns, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y) {
  GpModel model(std::move(spec), std::move(active_columns), design_columns);
  if (X.rows() != y.size()) {
    throw std::invalid_argument("GpModel::condition: X rows != y size");
  }
  if (!model.active_columns_.empty() &&
      model.active_columns_.back() >= X.cols() && X.rows() > 0) {
    throw std::invalid_argument("GpModel::condition: active column beyond input width");
  }
  model.X_ = X;
  model.y_ = y;
  if (X.rows() > 0) model.factorize();
  return model;
}

Eigen::MatrixXd GpModel::scaled_sq_distances(const Eigen::MatrixXd& A,
                                             const Eigen::MatrixXd& B, int first,
                                             int count) const {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(A.rows(), B.rows());
  for (int i = first; i < first + count; ++i) {
    const Eigen::Index col = active_columns_[static_cast<std::size_t>(i)];
    const double ell = spec_.lengthscales[i];
    const Eigen::ArrayXXd diff =
        ((A.col(col).replicate(1, B.rows()) - B.col(col).transpose().replicate(A.rows(), 1))
             .array() /
         ell);
    acc.array() += diff.square();
  }
  return acc;
}

Eigen::MatrixXd GpModel::kernel_matrix(const Eigen::MatrixXd& A,
                                       const Eigen::MatrixXd& B) const {
  const int total = static_cast<int>(active_columns_.size());
  if (spec_.composition == KernelComposition::product) {
    const Eigen::MatrixXd sq = scaled_sq_distances(A, B, 0, total);
    return spec_.signal_variance * (-0.5 * sq.array()).exp().matrix();
  }
  const Eigen::MatrixXd sqx = scaled_sq_distances(A, B, 0, design_columns_);
  const Eigen::MatrixXd sqz = scaled_sq_distances(A, B, design_columns_, total - design_columns_);
  return spec_.signal_variance *
         ((-0.5 * sqx.array()).exp() + (-0.5 * sqz.array()).exp()).matrix();
}

double GpModel::kernel_eval(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  if (a.size() != b.size()) {
    throw std::invalid_argument("kernel_eval: point width mismatch");
  }
  if (!active_columns_.empty() && active_columns_.back() >= a.size()) {
    throw std::invalid_argument("kernel_eval: point narrower than active columns");
  }
  return kernel_matrix(a.transpose(), b.transpose())(0, 0);
}

void GpModel::factorize() {
  const Eigen::Index n = X_.rows();
  const Eigen::MatrixXd K = kernel_matrix(X_, X_);
  jitter_ = 0.0;
  double jitter_factor = 1e-10;
  while (true) {
    Eigen::MatrixXd Ky = K;
    Ky.diagonal().array() += spec_.noise_variance + jitter_;
    Eigen::LLT<Eigen::MatrixXd> llt(Ky);
    if (llt.info() == Eigen::Success) {
      chol_ = llt.matrixL();
      alpha_ = llt.solve(y_);
      return;
    }
    if (jitter_factor > 1e-4) {
      throw std::runtime_error("GpModel: Cholesky failed even at maximum jitter (n=" +
                               std::to_string(n) + ")");
    }
    jitter_ = jitter_factor * spec_.signal_variance;
    jitter_factor *= 10.0;
  }
}

GaussianMoments GpModel::posterior(const Eigen::MatrixXd& query) const {
  GaussianMoments out;
  const Eigen::MatrixXd Kqq = kernel_matrix(query, query);
  if (X_.rows() == 0) {
    out.mean = Eigen::VectorXd::Zero(query.rows());
    out.covariance = 0.5 * (Kqq + Kqq.transpose());
    return out;
  }
  const Eigen::MatrixXd Kxq = kernel_matrix(X_, query);
  out.mean = Kxq.transpose() * alpha_;
  const Eigen::MatrixXd V = chol_.triangularView<Eigen::Lower>().solve(Kxq);
  Eigen::MatrixXd cov = Kqq - V.transpose() * V;
  cov = 0.5 * (cov + cov.transpose()).eval();
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    if (cov(i, i) < 0.0) {
      cov(i, i) = 0.0;
      g_variance_clamps.fetch_add(1, std::memory_order_relaxed);
    }
  }
  out.covariance = std::move(cov);
  return out;
}

void GpModel::latent(const Eigen::VectorXd& point, double& mean, double& variance) const {
  const double prior_var = kernel_eval(point, point);
  if (X_.rows() == 0) {
    mean = 0.0;
    variance = prior_var;
    return;
  }
  const Eigen::VectorXd k = kernel_matrix(X_, point.transpose()).col(0);
  mean = k.dot(alpha_);
  const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k);
  variance = prior_var - v.squaredNorm();
  if (variance < 0.0) {
    variance = 0.0;
    g_variance_clamps.fetch_add(1, std::memory_order_relaxed);
  }
}

std::pair<double, double> GpModel::predictive(const Eigen::VectorXd& point) const {
  double mean = 0.0, variance = 0.0;
  latent(point, mean, variance);
  return {mean, variance + spec_.noise_variance};
}

double GpModel::log_marginal_likelihood() const {
  const Eigen::Index n = X_.rows();
  if (n == 0) throw std::runtime_error("log_marginal_likelihood: model has no data");
  const double quad = y_.dot(alpha_);
  const double logdet = 2.0 * chol_.diagonal().array().log().sum();
  const double value =
      -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  if (!std::isfinite(value)) {
    throw std::runtime_error(
        "log_marginal_likelihood: non-finite (min chol diag = " +
        std::to_string(chol_.diagonal().minCoeff()) +
        ", max chol diag = " + std::to_string(chol_.diagonal().maxCoeff()) + ")");
  }
  return value;
}

Eigen::MatrixXd GpModel::joint_sample(const Eigen::MatrixXd& query, int sample_count,
                                      std::uint64_t seed) const {
  if (sample_count < 1) throw std::invalid_argument("joint_sample: sample_count < 1");
  const GaussianMoments moments = posterior(query);
  const Eigen::Index m = query.rows();
  // Eigendecomposition with eigenvalue clamping: robust to the semidefinite
  // covariances that arise at (near-)interpolated points.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(moments.covariance);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("joint_sample: eigendecomposition failed");
  }
  const Eigen::VectorXd scale = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd factor = eig.eigenvectors() * scale.asDiagonal();
  Rng rng(seed);
  Eigen::MatrixXd samples(sample_count, m);
  Eigen::VectorXd z(m);
  for (int s = 0; s < sample_count; ++s) {
    for (Eigen::Index i = 0; i < m; ++i) z[i] = rng.normal();
    samples.row(s) = (moments.mean + factor * z).transpose();
  }
  return samples;
}

GpModel GpModel::fit(KernelSpec spec, std::vector<Eigen::Index> active_columns,
                     int design_columns, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const FitConfig& config) {
  if (X.rows() == 0) throw std::invalid_argument("GpModel::fit: empty dataset");
  if (config.restarts < 1) throw std::invalid_argument("GpModel::fit: restarts < 1");
  const int p = static_cast<int>(active_columns.size());
  const int n_params = p + 1;  // log lengthscales + log signal variance

  // Objective: negative MLL as a function of log-parameters, with gradient.
  // d(MLL)/d(theta) = 0.5 tr((alpha alpha^T - Ky^{-1}) dK/dtheta).
  const auto eval = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) -> double {
    KernelSpec s = spec;
    s.lengthscales = theta.head(p).array().exp();
    s.signal_variance = std::exp(theta[p]);
    GpModel model = GpModel::condition(s, active_columns, design_columns, X, y);
    const double mll = model.log_marginal_likelihood();
    const Eigen::Index n = X.rows();
    const Eigen::MatrixXd Kf = model.kernel_matrix(X, X);  // noiseless kernel
    const Eigen::MatrixXd Kinv = model.chol_.triangularView<Eigen::Lower>()
                                     .solve(Eigen::MatrixXd::Identity(n, n))
                                     .transpose() *
                                 model.chol_.triangularView<Eigen::Lower>().solve(
                                     Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd W = model.alpha_ * model.alpha_.transpose() - Kinv;
    grad.resize(n_params);
    // dK/d(log signal_variance) = Kf for both compositions.
    grad[p] = -0.5 * (W.array() * Kf.array()).sum();
    Eigen::MatrixXd block;  // per-composition factor multiplying the distance term
    for (int i = 0; i < p; ++i) {
      const Eigen::Index col = active_columns[static_cast<std::size_t>(i)];
      const double ell = s.lengthscales[i];
      const Eigen::ArrayXXd diff =
          (X.col(col).replicate(1, n) - X.col(col).transpose().replicate(n, 1)).array() / ell;
      Eigen::ArrayXXd dK;
      if (s.composition == KernelComposition::product) {
        dK = Kf.array() * diff.square();
      } else {
        if (block.rows() != n || i == 0 || i == design_columns) {
          const bool in_design = i < design_columns;
          const int first = in_design ? 0 : design_columns;
          const int count = in_design ? design_columns : p - design_columns;
          block = s.signal_variance *
                  (-0.5 * model.scaled_sq_distances(X, X, first, count).array())
                      .exp()
                      .matrix();
        }
        dK = block.array() * diff.square();
      }
      grad[i] = -0.5 * (W.array() * dK).sum();
    }
    return -mll;
  };

  const Eigen::VectorXd lo = (Eigen::VectorXd(n_params) << Eigen::VectorXd::Constant(
                                  p, std::log(config.lengthscale_min)),
                              std::log(config.signal_min))
                                 .finished();
  const Eigen::VectorXd hi = (Eigen::VectorXd(n_params) << Eigen::VectorXd::Constant(
                                  p, std::log(config.lengthscale_max)),
                              std::log(config.signal_max))
                                 .finished();

  double best_value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta = Eigen::VectorXd::Zero(n_params);
  Rng rng(derive_seed(config.seed, {0x666974ull}));
  for (int restart = 0; restart < config.restarts; ++restart) {
    Eigen::VectorXd theta(n_params);
    if (restart == 0) {
      theta.setZero();  // unit lengthscales and signal variance
    } else {
      for (int i = 0; i < n_params; ++i) {
        theta[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
      }
    }
    theta = clamp_to_box(theta, lo, hi);
    double initial = 0.0;
    double final_value;
    try {
      final_value = lbfgs_box_minimize(eval, lo, hi, theta, config.max_iterations,
                                       config.gradient_tolerance, &initial);
    } catch (const std::runtime_error&) {
      continue;  // factorization failure at a restart start point: skip it
    }
    if (final_value < best_value) {
      best_value = final_value;
      best_theta = theta;
    }
  }
  if (!std::isfinite(best_value)) {
    throw std::runtime_error("GpModel::fit: every restart failed");
  }
  KernelSpec best = spec;
  best.lengthscales = best_theta.head(p).array().exp();
  best.signal_variance = std::exp(best_theta[p]);
  return GpModel::condition(best, std::move(active_columns), design_columns, X, y);
}

double kl_univariate(double mean_p, double var_p, double mean_q, double var_q) {
  if (var_p <= 0.0 || var_q <= 0.0) {
    throw std::invalid_argument("kl_univariate: variances must be positive");
  }
  const double diff = mean_q - mean_p;
  return 0.5 * (var_p / var_q + diff * diff / var_q - 1.0 + std::log(var_q / var_p));
}

double kl_multivariate(const GaussianMoments& p, const GaussianMoments& q) {
  const Eigen::Index k = p.mean.size();
  if (q.mean.size() != k || p.covariance.rows() != k || q.covariance.rows() != k) {
    throw std::invalid_argument("kl_multivariate: dimension mismatch");
  }
  const double scale = std::max({p.covariance.diagonal().maxCoeff(),
                                 q.covariance.diagonal().maxCoeff(), 1e-300});
  double jitter = 0.0;
  double factor = 1e-12;
  while (true) {
    Eigen::MatrixXd cp = p.covariance;
    Eigen::MatrixXd cq = q.covariance;
    cp.diagonal().array() += jitter;
    cq.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> lp(cp), lq(cq);
    if (lp.info() == Eigen::Success && lq.info() == Eigen::Success) {
      const Eigen::MatrixXd Lp = lp.matrixL();
      const Eigen::MatrixXd Lq = lq.matrixL();
      const Eigen::MatrixXd A = lq.matrixL().solve(Lp);
      const double trace = A.squaredNorm();
      const Eigen::VectorXd w = lq.matrixL().solve(q.mean - p.mean);
      const double maha = w.squaredNorm();
      const double logdet_q = 2.0 * Lq.diagonal().array().log().sum();
      const double logdet_p = 2.0 * Lp.diagonal().array().log().sum();
      const double kl =
          0.5 * (trace + maha - static_cast<double>(k) + logdet_q - logdet_p);
      return std::max(kl, 0.0);
    }
    if (factor > 1e-3) {
      throw std::runtime_error("kl_multivariate: covariance factorization failed");
    }
    jitter = std::max(factor * scale, 1e-18);
    factor *= 10.0;
  }
}

}  // namespace sadcbo
