#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace sadcbo {

enum class KernelComposition { product, additive };

// RBF kernel over the active input columns. The product composition is a
// single joint RBF (equal to the product of per-block RBF factors); the
// additive composition sums one RBF over the design block and one over the
// context block, sharing signal_variance.
struct KernelSpec {
  KernelComposition composition = KernelComposition::product;
  Eigen::VectorXd lengthscales;  // one per active column, all > 0
  double signal_variance = 1.0;
  double noise_variance = 1e-3;
};

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct FitConfig {
  int restarts = 2;              // restart 0 always starts from unit parameters
  int max_iterations = 40;       // optimizer iterations per restart
  double gradient_tolerance = 1e-4;
  double lengthscale_min = 0.01;
  double lengthscale_max = 10.0;
  double signal_min = 0.01;
  double signal_max = 10.0;
  std::uint64_t seed = 0;
};

// Exact GP regression with a cached Cholesky factor of K + noise_variance*I.
// Inputs are full-width rows; the kernel only looks at active_columns, of
// which the first design_columns entries form the design block.
class GpModel {
 public:
  GpModel() = default;

  // Prior model with no observations.
  GpModel(KernelSpec spec, std::vector<Eigen::Index> active_columns, int design_columns);

  // Conditions on (X, y) with fixed hyperparameters.
  static GpModel condition(KernelSpec spec, std::vector<Eigen::Index> active_columns,
                           int design_columns, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y);

  // Multi-restart maximum-marginal-likelihood fit (projected L-BFGS on log
  // lengthscales and log signal variance; noise variance stays fixed).
  static GpModel fit(KernelSpec spec, std::vector<Eigen::Index> active_columns,
                     int design_columns, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const FitConfig& config);

  double kernel_eval(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const;

  // Joint latent posterior (no observation noise) at the query rows.
  GaussianMoments posterior(const Eigen::MatrixXd& query) const;

  // Latent mean/variance at a single point (no observation noise).
  void latent(const Eigen::VectorXd& point, double& mean, double& variance) const;

  // Predictive distribution over a noisy observation y* at the point.
  std::pair<double, double> predictive(const Eigen::VectorXd& point) const;

  double log_marginal_likelihood() const;

  // Draws sample_count joint latent samples at the query rows (one per row of
  // the result), reproducibly from the seed.
  Eigen::MatrixXd joint_sample(const Eigen::MatrixXd& query, int sample_count,
                               std::uint64_t seed) const;

  const KernelSpec& spec() const { return spec_; }
  const std::vector<Eigen::Index>& active_columns() const { return active_columns_; }
  int design_columns() const { return design_columns_; }
  Eigen::Index train_size() const { return X_.rows(); }
  const Eigen::MatrixXd& train_inputs() const { return X_; }
  const Eigen::VectorXd& train_outputs() const { return y_; }
  double applied_jitter() const { return jitter_; }

 private:
  void factorize();
  Eigen::MatrixXd scaled_sq_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                      int first, int count) const;

  KernelSpec spec_;
  std::vector<Eigen::Index> active_columns_;
  int design_columns_ = 0;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd chol_;   // lower factor of K + noise_variance*I (+ jitter)
  Eigen::VectorXd alpha_;  // (K + noise_variance*I)^{-1} y
  double jitter_ = 0.0;
};

// KL(N(mean_p, var_p) || N(mean_q, var_q)), closed form.
double kl_univariate(double mean_p, double var_p, double mean_q, double var_q);

// KL(N_p || N_q) for multivariate Gaussians; shared escalating jitter is
// applied to both covariances when a factorization fails. Clamped at 0.
double kl_multivariate(const GaussianMoments& p, const GaussianMoments& q);

// Number of posterior-variance values clamped up to zero so far (diagnostic).
long variance_clamp_count();

}  // namespace sadcbo
