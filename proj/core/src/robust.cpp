#include "tesda/robust.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>

#include "tesda/error.hpp"
#include "tesda/parallel.hpp"
#include "tesda/rng.hpp"
#include "tesda/special.hpp"

namespace tesda {
namespace {

constexpr double kMaxCondition = 1e12;
constexpr double kRidgeScale = 1e-9;

bool well_conditioned(const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return false;
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  return lo > 0.0 && std::isfinite(hi) && hi / lo <= kMaxCondition;
}

// Symmetrizes, then adds the diagonal ridge if needed. Returns false when the
// matrix stays singular or ill-conditioned.
bool regularize(Eigen::MatrixXd& sigma) {
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  if (!sigma.allFinite()) return false;
  if (well_conditioned(sigma)) return true;
  const double trace = sigma.trace();
  if (!(trace > 0.0)) return false;
  sigma.diagonal().array() += kRidgeScale * trace / static_cast<double>(sigma.rows());
  return well_conditioned(sigma);
}

struct SubsetStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // divisor = subset size
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
  bool ok = false;
};

SubsetStats subset_stats(const Eigen::MatrixXd& x, const std::vector<std::size_t>& idx) {
  SubsetStats s;
  const auto k = x.cols();
  s.mean = Eigen::VectorXd::Zero(k);
  for (auto i : idx) s.mean += x.row(static_cast<Eigen::Index>(i)).transpose();
  s.mean /= static_cast<double>(idx.size());
  s.cov = Eigen::MatrixXd::Zero(k, k);
  for (auto i : idx) {
    const Eigen::VectorXd d = x.row(static_cast<Eigen::Index>(i)).transpose() - s.mean;
    s.cov.selfadjointView<Eigen::Lower>().rankUpdate(d);
  }
  s.cov = s.cov.selfadjointView<Eigen::Lower>();
  s.cov /= static_cast<double>(idx.size());
  if (!regularize(s.cov)) return s;
  s.llt.compute(s.cov);
  if (s.llt.info() != Eigen::Success) return s;
  const Eigen::MatrixXd l = s.llt.matrixL();
  s.log_det = 2.0 * l.diagonal().array().log().sum();
  s.ok = std::isfinite(s.log_det);
  return s;
}

Eigen::VectorXd all_distances(const Eigen::MatrixXd& x, const SubsetStats& s) {
  Eigen::MatrixXd centered = (x.rowwise() - s.mean.transpose()).transpose();
  s.llt.matrixL().solveInPlace(centered);
  return centered.colwise().squaredNorm().transpose();
}

// Indices of the h smallest distances (ties by index), ascending.
std::vector<std::size_t> smallest_h(const Eigen::VectorXd& d, std::size_t h) {
  std::vector<std::size_t> order(static_cast<std::size_t>(d.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    const double da = d(static_cast<Eigen::Index>(a));
    const double db = d(static_cast<Eigen::Index>(b));
    return da < db || (da == db && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(h - 1), order.end(), less);
  order.resize(h);
  std::sort(order.begin(), order.end());
  return order;
}

struct StartResult {
  bool ok = false;
  double log_det = 0.0;
  std::vector<std::size_t> subset;
  std::vector<double> trace;
  std::size_t csteps = 0;
};

StartResult run_start(const Eigen::MatrixXd& x, std::size_t h, const McdOptions& opt, std::size_t start) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<std::size_t>(x.cols());
  auto rng = make_stream(opt.seed, start);

  // Initial (k+1)-subset by index; grown one random point at a time while
  // its covariance is singular.
  std::vector<std::size_t> initial;
  std::unordered_set<std::size_t> chosen;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  auto add_random = [&] {
    for (;;) {
      const auto i = pick(rng);
      if (chosen.insert(i).second) {
        initial.push_back(i);
        return;
      }
    }
  };
  for (std::size_t i = 0; i <= k; ++i) add_random();
  std::sort(initial.begin(), initial.end());
  SubsetStats stats = subset_stats(x, initial);
  while (!stats.ok && initial.size() < h) {
    add_random();
    std::sort(initial.begin(), initial.end());
    stats = subset_stats(x, initial);
  }
  StartResult out;
  if (!stats.ok) return out;

  std::vector<std::size_t> subset;
  for (std::size_t step = 0; step < opt.max_csteps; ++step) {
    auto next = smallest_h(all_distances(x, stats), h);
    if (next == subset) break;
    auto next_stats = subset_stats(x, next);
    if (!next_stats.ok) return out;
    if (!out.trace.empty()) {
      const double prev = out.trace.back();
      if (next_stats.log_det > prev + 1e-9 * std::max(1.0, std::abs(prev))) {
        throw NumericalError("MCD C-step increased the covariance determinant (start " + std::to_string(start) + ")");
      }
    }
    out.trace.push_back(next_stats.log_det);
    subset = std::move(next);
    stats = std::move(next_stats);
    ++out.csteps;
  }
  out.ok = true;
  out.log_det = stats.log_det;
  out.subset = std::move(subset);
  return out;
}

}  // namespace

EnvelopeModel::EnvelopeModel(Eigen::VectorXd mu, Eigen::MatrixXd sigma, std::size_t h, std::size_t n)
    : mu_(std::move(mu)), sigma_(std::move(sigma)), h_(h), n_(n) {
  const auto k = mu_.size();
  if (k == 0) throw ValidationError("envelope: empty mean");
  if (sigma_.rows() != k || sigma_.cols() != k) throw ValidationError("envelope: covariance shape does not match mean");
  if (!mu_.allFinite()) throw ValidationError("envelope: non-finite mean");
  const double scale = std::max(1.0, sigma_.cwiseAbs().maxCoeff());
  if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ValidationError("envelope: covariance is not symmetric");
  }
  if (!regularize(sigma_)) {
    throw NumericalError("envelope: covariance singular or condition number > 1e12 after ridge regularization");
  }
  llt_.compute(sigma_);
  if (llt_.info() != Eigen::Success) throw NumericalError("envelope: Cholesky factorization failed");
}

Eigen::MatrixXd EnvelopeModel::sigma_inverse() const {
  return llt_.solve(Eigen::MatrixXd::Identity(sigma_.rows(), sigma_.cols()));
}

void EnvelopeModel::set_delta_sq(double delta_sq) {
  if (!(delta_sq >= 0.0) || !std::isfinite(delta_sq)) throw ValidationError("envelope: delta^2 must be finite and >= 0");
  delta_sq_ = delta_sq;
}

EnvelopeModel EnvelopeModel::with_delta_sq(double delta_sq) const {
  EnvelopeModel copy = *this;
  copy.set_delta_sq(delta_sq);
  return copy;
}

MahalanobisScore EnvelopeModel::mahalanobis_sq(const Eigen::VectorXd& theta) const {
  if (theta.size() != mu_.size()) {
    throw ValidationError("mahalanobis: theta has " + std::to_string(theta.size()) + " entries, envelope expects " +
                          std::to_string(mu_.size()));
  }
  Eigen::VectorXd z = theta - mu_;
  llt_.matrixL().solveInPlace(z);
  return {z.squaredNorm()};
}

bool EnvelopeModel::is_outlier(const Eigen::VectorXd& theta) const {
  if (!delta_sq_) throw ValidationError("envelope: threshold (delta^2) not set");
  return mahalanobis_sq(theta).d_sq > *delta_sq_;
}

std::size_t mcd_subset_size(std::size_t n, std::size_t k) { return (n + k + 1) / 2; }

double mcd_consistency_factor(std::size_t h, std::size_t n, std::size_t k) {
  if (h >= n) return 1.0;
  const double alpha = static_cast<double>(h) / static_cast<double>(n);
  const double q = special::chi2_quantile(static_cast<double>(k), alpha);
  return alpha / special::chi2_cdf(static_cast<double>(k + 2), q);
}

McdFit fit_mcd(const Eigen::MatrixXd& samples, const McdOptions& options) {
  const auto n = static_cast<std::size_t>(samples.rows());
  const auto k = static_cast<std::size_t>(samples.cols());
  if (k == 0) throw ValidationError("fit_mcd: zero-dimensional samples");
  if (n <= k + 1) {
    throw ValidationError("fit_mcd: need n > k + 1 samples (n = " + std::to_string(n) + ", k = " + std::to_string(k) + ")");
  }
  if (!samples.allFinite()) throw ValidationError("fit_mcd: non-finite samples");
  if (options.n_starts == 0) throw ValidationError("fit_mcd: n_starts must be >= 1");
  const std::size_t h = options.h.value_or(mcd_subset_size(n, k));
  if (h <= k || h > n) {
    throw ValidationError("fit_mcd: subset size h = " + std::to_string(h) + " must lie in (k, n]");
  }

  std::vector<StartResult> results(options.n_starts);
  parallel_for(options.n_starts, options.threads, [&](std::size_t s) { results[s] = run_start(samples, h, options, s); });

  std::size_t best = options.n_starts;
  for (std::size_t s = 0; s < results.size(); ++s) {
    if (!results[s].ok) continue;
    if (best == options.n_starts || results[s].log_det < results[best].log_det) best = s;
  }
  if (best == options.n_starts) {
    throw NumericalError("fit_mcd: every start produced a singular subset covariance (samples not in general position)");
  }

  const auto& winner = results[best];
  const auto stats = subset_stats(samples, winner.subset);
  const double c = mcd_consistency_factor(h, n, k);

  McdFit fit;
  fit.model = EnvelopeModel(stats.mean, c * stats.cov, h, n);
  if (options.reweight) {
    constexpr double kKeep = 0.975;
    const double cutoff = special::chi2_quantile(static_cast<double>(k), kKeep);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i) {
      if (fit.model.mahalanobis_sq(samples.row(static_cast<Eigen::Index>(i)).transpose()).d_sq <= cutoff) {
        kept.push_back(i);
      }
    }
    if (kept.size() > k + 1) {
      const auto refined = subset_stats(samples, kept);
      if (refined.ok) {
        const double rc = kKeep / special::chi2_cdf(static_cast<double>(k + 2), cutoff);
        fit.model = EnvelopeModel(refined.mean, rc * refined.cov, h, n);
        fit.diagnostics.reweighted_count = kept.size();
        fit.diagnostics.reweight_factor = rc;
      }
    }
  }
  fit.diagnostics.best_start = best;
  fit.diagnostics.csteps = winner.csteps;
  fit.diagnostics.raw_log_det = winner.log_det;
  fit.diagnostics.consistency_factor = c;
  fit.diagnostics.subset = winner.subset;
  fit.diagnostics.log_det_trace = winner.trace;
  return fit;
}

std::size_t expected_flag_count(double epsilon, std::size_t n) {
  const double product = epsilon * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(product - 1e-9 * std::max(1.0, product)));
}

double empirical_quantile_threshold(std::vector<double> scores, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.5)) {
    throw ValidationError("epsilon must lie in (0, 0.5], got " + std::to_string(epsilon));
  }
  const std::size_t n = scores.size();
  const std::size_t flagged = expected_flag_count(epsilon, n);
  if (static_cast<double>(n) * epsilon < 1.0 - 1e-9 || flagged >= n) {
    throw ValidationError("empirical calibration needs n >= 1/epsilon (n = " + std::to_string(n) + ")");
  }
  const std::size_t rank = n - flagged;  // 1-based rank of the threshold
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(rank - 1), scores.end());
  return scores[rank - 1];
}

double calibrate_delta_empirical(const EnvelopeModel& model, const Eigen::MatrixXd& training_thetas, double epsilon) {
  std::vector<double> scores(static_cast<std::size_t>(training_thetas.rows()));
  for (Eigen::Index i = 0; i < training_thetas.rows(); ++i) {
    scores[static_cast<std::size_t>(i)] = model.mahalanobis_sq(training_thetas.row(i).transpose()).d_sq;
  }
  return empirical_quantile_threshold(std::move(scores), epsilon);
}

}  // namespace tesda
