#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace tesda {

struct MahalanobisScore {
  double d_sq = 0.0;
};

/// Robust Gaussian fit (mu_hat, Sigma_hat) plus the squared outlier threshold.
/// Immutable once built; scoring is thread-safe.
class EnvelopeModel {
 public:
  EnvelopeModel() = default;

  /// Validates symmetry and positive definiteness and caches the Cholesky
  /// factor. A ridge of 1e-9 * trace / k is added to the diagonal when the
  /// matrix is not numerically positive definite or its condition number
  /// exceeds 1e12; NumericalError if that does not help.
  EnvelopeModel(Eigen::VectorXd mu, Eigen::MatrixXd sigma, std::size_t h, std::size_t n);

  std::size_t dim() const { return static_cast<std::size_t>(mu_.size()); }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  Eigen::MatrixXd sigma_inverse() const;
  std::size_t h() const { return h_; }
  std::size_t n() const { return n_; }

  std::optional<double> delta_sq() const { return delta_sq_; }
  void set_delta_sq(double delta_sq);
  EnvelopeModel with_delta_sq(double delta_sq) const;

  /// (theta - mu)^T Sigma^-1 (theta - mu) via a triangular solve.
  MahalanobisScore mahalanobis_sq(const Eigen::VectorXd& theta) const;

  /// d^2 > delta^2 (strict). Throws if no threshold has been set.
  bool is_outlier(const Eigen::VectorXd& theta) const;

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::size_t h_ = 0;
  std::size_t n_ = 0;
  std::optional<double> delta_sq_;
};

struct McdOptions {
  /// Subset size; defaults to floor((n + k + 1) / 2).
  std::optional<std::size_t> h;
  std::size_t n_starts = 500;
  std::size_t max_csteps = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// One-step reweighting: refit on the points with d^2 <= chi2_k(0.975)
  /// under the raw estimate. Off gives the raw h-subset estimator.
  bool reweight = true;
};

struct McdDiagnostics {
  std::size_t best_start = 0;
  std::size_t csteps = 0;
  double raw_log_det = 0.0;
  double consistency_factor = 1.0;
  /// Points kept by the reweighting step (0 when reweighting is off).
  std::size_t reweighted_count = 0;
  double reweight_factor = 1.0;
  /// Indices of the winning h-subset, ascending.
  std::vector<std::size_t> subset;
  /// log det of the subset covariance after each C-step of the winning start.
  std::vector<double> log_det_trace;
};

struct McdFit {
  EnvelopeModel model;
  McdDiagnostics diagnostics;
};

/// Default h = floor((n + k + 1) / 2).
std::size_t mcd_subset_size(std::size_t n, std::size_t k);

/// Factor that makes the covariance of the innermost fraction h/n of a
/// Gaussian sample consistent for the full covariance:
/// c = alpha / F_{chi2_{k+2}}(q_alpha), alpha = h/n, q_alpha = chi2_k quantile.
double mcd_consistency_factor(std::size_t h, std::size_t n, std::size_t k);

/// FAST-MCD on the rows of `samples` (n x k). Start subsets are drawn from
/// row indices only, so the fit is affine equivariant for a fixed seed. Each
/// start runs C-steps to convergence; the subset with the smallest covariance
/// determinant wins (ties go to the lower start index). The returned model
/// has no threshold set. With options.reweight the raw (mu, Sigma) is
/// refined by one reweighting step; h in the model is still the subset size.
McdFit fit_mcd(const Eigen::MatrixXd& samples, const McdOptions& options = {});

/// Lower-nearest-rank (1 - eps) quantile of the training d^2 values: with the
/// scores sorted ascending, returns score number n - ceil(eps * n) (1-based),
/// so exactly ceil(eps * n) training points lie strictly above it when scores
/// are distinct. eps in (0, 0.5], n >= 1 / eps.
double calibrate_delta_empirical(const EnvelopeModel& model, const Eigen::MatrixXd& training_thetas, double epsilon);
double empirical_quantile_threshold(std::vector<double> scores, double epsilon);

/// ceil(eps * n), guarded against representation error in eps * n.
std::size_t expected_flag_count(double epsilon, std::size_t n);

}  // namespace tesda
