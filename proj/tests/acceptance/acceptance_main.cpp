// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria (capped at 125).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "test_support.hpp"
#include "tesda/ablation.hpp"
#include "tesda/dct.hpp"
#include "tesda/detector.hpp"
#include "tesda/metrics.hpp"
#include "tesda/pca.hpp"
#include "tesda/robust.hpp"
#include "tesda/synth.hpp"
#include "tesda/thresholds.hpp"

namespace {

using namespace tesda;
using tesda::testing::gaussian_matrix;
using tesda::testing::two_layer_spec;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed check; the first few reasons are kept for the report.
  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (pass || failures < 3) detail << (detail.tellp() > 0 ? "; " : "") << "violated: " << what;
    pass = false;
    ++failures;
  }
  int failures = 0;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

Outcome bound_soundness() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  constexpr std::size_t kDraws = 1000000;
  double worst_excess = -1.0;
  int cells = 0, typical = 0;
  for (std::size_t k : {2u, 4u, 8u, 16u}) {
    for (double eps : {0.01, 0.05, 0.1}) {
      const std::string cell = "k=" + std::to_string(k) + " eps=" + fmt(eps);
      const auto cheb = delta_chebyshev(k, 100000, eps);
      const auto sub = delta_subexponential(k, eps);
      const auto cher = delta_chernoff(k, eps);
      const double exact = boost::math::quantile(boost::math::chi_squared(static_cast<double>(k)), 1.0 - eps);
      for (const auto* r : {&cheb, &sub, &cher}) {
        const auto mc = chi2_tail_mc(k, r->delta_sq, kDraws, 1000 + k);
        worst_excess = std::max(worst_excess, mc.estimate - (eps + 3 * mc.standard_error));
        o.require(mc.estimate <= eps + 3 * mc.standard_error, cell + " " + to_string(r->kind) + " MC tail " + fmt(mc.estimate));
        o.require(r->delta_sq >= exact, cell + " " + to_string(r->kind) + " below exact quantile");
      }
      o.require(cher.delta <= sub.delta, cell + " chernoff > subexponential");
      // The sub-exponential <= Chebyshev ordering is only expected to hold typically; count it.
      ++cells;
      typical += sub.delta <= cheb.delta ? 1 : 0;
    }
  }
  const double secs = seconds_since(start);
  o.require(secs < 60.0, "runtime " + fmt(secs) + " s >= 60 s");
  o.detail << (o.detail.tellp() > 0 ? "; " : "") << "12 cells x 3 bounds at 1e6 draws, max(MC - eps - 3SE) = "
           << fmt(worst_excess) << ", subexponential <= chebyshev in " << typical << "/" << cells << " cells, "
           << fmt(secs) << " s";
  return o;
}

double ks_chi2(std::vector<double> v, double k) {
  std::sort(v.begin(), v.end());
  const boost::math::chi_squared dist(k);
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = boost::math::cdf(dist, v[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

Outcome chi2_oracle() {
  Outcome o;
  for (Eigen::Index k : {2, 5, 10}) {
    const Eigen::MatrixXd a = gaussian_matrix(k, k, 7 + k);
    const Eigen::MatrixXd sigma = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(k, k);
    const Eigen::VectorXd mu = 3.0 * gaussian_matrix(k, 1, 8 + k);
    const EnvelopeModel truth(mu, sigma, 1, 1);
    const Eigen::MatrixXd l = sigma.llt().matrixL();
    const Eigen::MatrixXd z = gaussian_matrix(10000, k, 9 + k);
    std::vector<double> d2;
    for (Eigen::Index i = 0; i < z.rows(); ++i) d2.push_back(truth.mahalanobis_sq(mu + l * z.row(i).transpose()).d_sq);
    const double ks = ks_chi2(d2, static_cast<double>(k));
    o.require(ks <= 0.02, "k=" + std::to_string(k) + " KS " + fmt(ks));
    o.detail << (o.detail.tellp() > 0 ? ", " : "") << "KS(k=" << k << ")=" << fmt(ks);
  }
  return o;
}

Outcome lambert_identity() {
  Outcome o;
  const double branch = -std::exp(-1.0);
  std::vector<double> grid;
  // Half the points crowd the branch point, half approach zero.
  for (int i = 0; i < 500; ++i) grid.push_back(branch + 1e-9 * std::pow((-branch - 1e-9) / 2e-9, i / 499.0));
  for (int i = 0; i < 500; ++i) grid.push_back(-1e-12 * std::pow((-branch / 2) / 1e-12, i / 499.0));
  double worst = 0.0;
  for (double a : grid) {
    const double w = lambert_w_minus1(a);
    const double rel = std::abs(w * std::exp(w) - a) / std::abs(a);
    worst = std::max(worst, rel);
    o.require(rel <= 1e-12 && w <= -1.0, "a=" + fmt(a) + " relative residual " + fmt(rel));
  }
  const double at_branch = lambert_w_minus1(branch);
  o.require(std::abs(at_branch + 1.0) <= 1e-8, "W(-1/e) = " + fmt(at_branch));
  o.detail << (o.detail.tellp() > 0 ? "; " : "") << grid.size() << " points, worst relative residual " << fmt(worst)
           << ", W(-1/e) + 1 = " << fmt(at_branch + 1.0);
  return o;
}

Outcome mcd_robustness() {
  Outcome o;
  double worst_mu = 0.0, worst_sigma = 0.0, min_naive = INFINITY;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd x = gaussian_matrix(500, 2, 500 + rep);
    const Eigen::MatrixXd noise = gaussian_matrix(75, 2, 900 + rep);
    for (Eigen::Index i = 0; i < 75; ++i) x.row(i) = Eigen::RowVector2d(50.0, 0.0) + noise.row(i);
    const Eigen::Vector2d clean_mean = x.bottomRows(425).colwise().mean();
    const auto fit = fit_mcd(x, {.seed = rep});
    const double dmu = (fit.model.mu() - clean_mean).norm();
    const double dsigma = (fit.model.sigma() - Eigen::Matrix2d::Identity()).norm();
    const double naive = (x.colwise().mean().transpose() - clean_mean).norm();
    worst_mu = std::max(worst_mu, dmu);
    worst_sigma = std::max(worst_sigma, dsigma);
    min_naive = std::min(min_naive, naive);
    o.require(dmu <= 0.3 && dsigma <= 0.5 && naive >= 4.0, "replicate " + std::to_string(rep));
  }
  o.detail << (o.detail.tellp() > 0 ? "; " : "") << "20 replicates, max |mu - clean mean| = " << fmt(worst_mu)
           << ", max ||Sigma - I||_F = " << fmt(worst_sigma) << ", min naive offset = " << fmt(min_naive);
  return o;
}

Outcome mcd_equivariance() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd x = gaussian_matrix(300, 3, 40 + rep);
    x.topRows(30).array() += 12.0;
    Eigen::MatrixXd a = gaussian_matrix(3, 3, 60 + rep);
    a.diagonal().array() += 2.0;  // keeps A comfortably invertible
    const Eigen::VectorXd b = 10.0 * gaussian_matrix(3, 1, 80 + rep);
    const Eigen::MatrixXd y = (x * a.transpose()).rowwise() + b.transpose();
    const auto fx = fit_mcd(x, {.seed = rep});
    const auto fy = fit_mcd(y, {.seed = rep});
    const Eigen::VectorXd mu = a * fx.model.mu() + b;
    const Eigen::MatrixXd sigma = a * fx.model.sigma() * a.transpose();
    const double emu = (fy.model.mu() - mu).norm() / mu.norm();
    const double esigma = (fy.model.sigma() - sigma).norm() / sigma.norm();
    worst = std::max({worst, emu, esigma});
    o.require(emu <= 1e-6 && esigma <= 1e-6, "replicate " + std::to_string(rep) + " error " + fmt(std::max(emu, esigma)));
  }
  o.detail << (o.detail.tellp() > 0 ? "; " : "") << "5 random (A, b), worst relative error " << fmt(worst);
  return o;
}

Outcome dct_properties() {
  Outcome o;
  double worst_rt = 0.0, worst_parseval = 0.0, worst_dc = 0.0;
  for (auto [l, k] : {std::pair{2, 2}, {4, 4}, {8, 8}, {7, 5}}) {
    const Eigen::MatrixXd img = gaussian_matrix(l, k, static_cast<std::uint64_t>(l * 10 + k));
    const Eigen::MatrixXd c = dct2(img);
    const double rt = (idct2(c) - img).cwiseAbs().maxCoeff();
    const double parseval = std::abs(c.squaredNorm() - img.squaredNorm()) / img.squaredNorm();
    const double value = 0.7;
    const Eigen::MatrixXd dc = dct2(Eigen::MatrixXd::Constant(l, k, value));
    const double dc_err = std::abs(dc(0, 0) - value * std::sqrt(double(l * k)));
    const double rest = dc.cwiseAbs().sum() - std::abs(dc(0, 0));
    worst_rt = std::max(worst_rt, rt);
    worst_parseval = std::max(worst_parseval, parseval);
    worst_dc = std::max({worst_dc, dc_err, rest});
    const std::string size = std::to_string(l) + "x" + std::to_string(k);
    o.require(rt <= 1e-10, size + " round trip " + fmt(rt));
    o.require(parseval <= 1e-10, size + " Parseval " + fmt(parseval));
    o.require(dc_err <= 1e-12, size + " DC " + fmt(dc_err));
  }
  o.detail << (o.detail.tellp() > 0 ? "; " : "") << "sizes 2x2 4x4 8x8 7x5: round trip " << fmt(worst_rt)
           << ", Parseval " << fmt(worst_parseval) << ", constant-image DC " << fmt(worst_dc);
  return o;
}

Outcome pca_properties() {
  Outcome o;
  double worst_orth = 0.0, worst_rec = 0.0;
  for (Eigen::Index m : {3, 8, 16}) {
    const Eigen::MatrixXd mix = gaussian_matrix(m, m, 30 + m);
    const Eigen::MatrixXd x = gaussian_matrix(400, m, 31 + m) * mix;
    const auto pca = fit_pca(x);
    const double orth = (pca.basis.transpose() * pca.basis - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff();
    double rec = 0.0;
    for (Eigen::Index i = 0; i < 50; ++i) {
      const Eigen::VectorXd row = x.row(i).transpose();
      rec = std::max(rec, (pca.reconstruct(pca.project(row)) - row).cwiseAbs().maxCoeff());
    }
    bool monotone = true;
    for (Eigen::Index j = 1; j < m; ++j) monotone = monotone && pca.energies(j) <= pca.energies(j - 1);
    worst_orth = std::max(worst_orth, orth);
    worst_rec = std::max(worst_rec, rec);
    o.require(orth <= 1e-8, "M=" + std::to_string(m) + " orthonormality " + fmt(orth));
    o.require(rec <= 1e-9, "M=" + std::to_string(m) + " reconstruction " + fmt(rec));
    o.require(monotone, "M=" + std::to_string(m) + " energies not monotone");
  }
  const Eigen::MatrixXd rank1 = gaussian_matrix(300, 1, 5) * gaussian_matrix(1, 6, 6);
  const double second = fit_pca(rank1).energies(1);
  o.require(std::abs(second) < 1e-12, "rank-1 second energy " + fmt(second));
  o.detail << (o.detail.tellp() > 0 ? "; " : "") << "orthonormality " << fmt(worst_orth) << ", reconstruction "
           << fmt(worst_rec) << ", rank-1 second energy " << fmt(second);
  return o;
}

Outcome end_to_end() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  DetectorConfig config;
  config.epsilon = 0.01;
  config.threads = 1;

  const auto data = generate_in_memory(two_layer_spec(5000, 5000, 5000, 5.0, 2024), 1);
  const auto report = evaluate(fit(config, data.train), data.clean_test, data.attacked);
  o.require(report.coverage >= 0.99, "coverage " + fmt(report.coverage) + " < 0.99");
  o.require(report.fpr >= 0.002 && report.fpr <= 0.03, "FPR " + fmt(report.fpr) + " outside [0.002, 0.03]");

  const auto null_data = generate_in_memory(two_layer_spec(5000, 5000, 5000, 0.0, 2025), 1);
  const auto null_report = evaluate(fit(config, null_data.train), null_data.clean_test, null_data.attacked);
  const double se = std::sqrt(0.01 * 0.99 / 5000.0);
  o.require(std::abs(null_report.coverage - 0.01) <= 3 * se,
            "null coverage " + fmt(null_report.coverage) + " outside 0.01 +- " + fmt(3 * se));

  const double secs = seconds_since(start);
  o.require(secs < 120.0, "runtime " + fmt(secs) + " s >= 120 s");
  o.detail << (o.detail.tellp() > 0 ? "; " : "") << "5-sigma shift: coverage " << fmt(report.coverage) << ", FPR "
           << fmt(report.fpr) << "; null attack: coverage " << fmt(null_report.coverage) << " (0.01 +- "
           << fmt(3 * se) << "); " << fmt(secs) << " s single-threaded";
  return o;
}

std::set<std::size_t> flagged_set(const FittedDetector& det, const Eigen::MatrixXd& theta) {
  std::set<std::size_t> out;
  for (Eigen::Index i = 0; i < theta.rows(); ++i) {
    if (det.classify(theta.row(i).transpose()).is_attack) out.insert(static_cast<std::size_t>(i));
  }
  return out;
}

Outcome calibration() {
  Outcome o;
  const auto data = generate_in_memory(two_layer_spec(3000, 2000, 2000, 2.5, 77), 1);
  DetectorConfig config;
  config.dct = DctSelection::zigzag(0, 2, 4, 4);
  const auto fitted = fit_detailed(config, data.train);
  const auto test_theta = dataset_theta(fitted.detector, data.clean_test);
  const auto attacked_theta = dataset_theta(fitted.detector, data.attacked);

  const std::vector<double> sweep = {0.004, 0.01, 0.02, 0.04};
  std::set<std::size_t> prev_train, prev_test, prev_attacked;
  for (double eps : sweep) {
    const auto det = fitted.detector.with_thresholds(thresholds_for(fitted, eps, ThresholdMethod::empirical));
    const auto train = flagged_set(det, fitted.training_theta);
    const auto test = flagged_set(det, test_theta);
    const auto attacked = flagged_set(det, attacked_theta);
    const auto expected = expected_flag_count(eps, 3000);
    o.require(train.size() == expected, "eps=" + fmt(eps) + " flags " + std::to_string(train.size()) + " training samples, expected " + std::to_string(expected));
    o.require(std::includes(train.begin(), train.end(), prev_train.begin(), prev_train.end()) &&
                  std::includes(test.begin(), test.end(), prev_test.begin(), prev_test.end()) &&
                  std::includes(attacked.begin(), attacked.end(), prev_attacked.begin(), prev_attacked.end()),
              "flag sets not nested at eps=" + fmt(eps));
    o.detail << (o.detail.tellp() > 0 ? ", " : "") << "eps=" << eps << ": " << train.size() << "/" << expected
             << " train, " << attacked.size() << " attacked";
    prev_train = train;
    prev_test = test;
    prev_attacked = attacked;
  }
  return o;
}

Outcome metrics_arithmetic() {
  Outcome o;
  const auto r = compute_metrics({.true_positive = 99, .false_negative = 1, .false_positive = 2, .true_negative = 98});
  o.require(std::abs(r.coverage - 0.99) <= 1e-12, "coverage " + fmt(r.coverage));
  o.require(std::abs(r.fpr - 0.02) <= 1e-12, "FPR " + fmt(r.fpr));
  o.require(std::abs(r.f1 - 198.0 / 201.0) <= 1e-12, "F1 " + fmt(r.f1));
  o.detail << "coverage " << r.coverage << ", FPR " << r.fpr << ", F1 " << fmt(r.f1);
  return o;
}

Outcome ablation_shape() {
  Outcome o;
  DetectorConfig config;
  auto spec = two_layer_spec(3000, 1000, 1000, 5.0, 31);
  std::get<MeanShift>(spec.attack).layers = {"block2"};
  const auto rows = ablate_layers(config, generate_in_memory(spec, 1));
  o.require(rows.size() == 2 && rows[1].layer_id == "block2", "unexpected layer rows");
  if (rows.size() == 2) {
    o.require(rows[1].report.coverage >= 0.95, "attacked layer coverage " + fmt(rows[1].report.coverage));
    o.require(rows[0].report.coverage <= 0.10, "clean layer coverage " + fmt(rows[0].report.coverage));
    o.detail << (o.detail.tellp() > 0 ? "; " : "") << "layer sweep: block1 " << fmt(rows[0].report.coverage)
             << ", block2 (attacked) " << fmt(rows[1].report.coverage);
  }

  auto inject = two_layer_spec(3000, 1000, 1000, 0.0, 32);
  inject.attack = FrequencyInject{"block1", 5, 5.0};
  std::vector<std::size_t> ordinals(10);
  for (std::size_t i = 0; i < ordinals.size(); ++i) ordinals[i] = i;
  const auto dct_rows = ablate_dct(config, generate_in_memory(inject, 1), ordinals);
  const auto peak = std::max_element(dct_rows.begin(), dct_rows.end(), [](const auto& a, const auto& b) {
    return a.report.coverage < b.report.coverage;
  });
  o.require(peak->ordinal == 5, "DCT sweep peaks at ordinal " + std::to_string(peak->ordinal));
  double runner_up = 0.0;
  for (const auto& r : dct_rows) {
    if (r.ordinal != peak->ordinal) runner_up = std::max(runner_up, r.report.coverage);
  }
  o.detail << "; DCT sweep 0-9: peak at ordinal " << peak->ordinal << " (coverage " << fmt(peak->report.coverage)
           << ", next best " << fmt(runner_up) << ")";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"bound-soundness", bound_soundness},
      {"chi2-oracle-ks", chi2_oracle},
      {"lambert-identity", lambert_identity},
      {"mcd-robustness", mcd_robustness},
      {"mcd-affine-equivariance", mcd_equivariance},
      {"dct-properties", dct_properties},
      {"pca-properties", pca_properties},
      {"end-to-end-synthetic", end_to_end},
      {"calibration-exactness", calibration},
      {"metrics-arithmetic", metrics_arithmetic},
      {"ablation-shape", ablation_shape},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
      auto outcome = check();
      pass = outcome.pass;
      detail = outcome.detail.str();
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    failed += pass ? 0 : 1;
    std::printf("%s %-24s %s [%.1f s]\n", pass ? "PASS" : "FAIL", name, detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return std::min(failed, 125);
}
