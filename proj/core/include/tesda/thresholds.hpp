#pragma once

// Closed-form outlier thresholds Delta(eps) from tail bounds on d^2 ~ chi2_k:
// P[d^2 >= Delta^2] <= eps.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tesda {

enum class BoundKind { chebyshev, subexponential, chernoff };

const char* to_string(BoundKind kind);
BoundKind bound_kind_from_string(const std::string& s);

struct ThresholdResult {
  double delta = 0.0;
  double delta_sq = 0.0;
  BoundKind kind = BoundKind::chebyshev;
  std::string branch_note;
};

/// Delta = sqrt(k (n^2 - 4) / (eps n^2 - 2 n k)). Requires eps > 2k/n.
ThresholdResult delta_chebyshev(std::size_t k, std::size_t n, double epsilon);

/// Sub-exponential bound with chi2_k parameters (2k, 4):
///   P <= exp(-(Delta^2 - k)^2 / (8 k^2))   for k <= Delta^2 <= k^2 + k
///   P <= exp(-(Delta^2 - k) / 8)           for Delta^2 > k^2 + k
/// inverted branch by branch; branch_note says which one applied.
ThresholdResult delta_subexponential(std::size_t k, double epsilon);

/// Chernoff bound: Delta^2 = -k W_{-1}(-eps^(2/k) / e). eps in (0, 1].
ThresholdResult delta_chernoff(std::size_t k, double epsilon);

/// Lower branch of the Lambert W function on [-1/e, 0): the w <= -1 solving
/// w e^w = a. Halley iteration; NumericalError if the residual exceeds
/// 1e-12 |a|.
double lambert_w_minus1(double a);

struct ErrorRateTarget {
  enum class Kind { fnr, fpr };
  Kind kind = Kind::fpr;
  double tau = 0.0;

  static ErrorRateTarget fnr(double tau_n) { return {Kind::fnr, tau_n}; }
  static ErrorRateTarget fpr(double tau_p) { return {Kind::fpr, tau_p}; }
};

/// eps = 1 - tau_N for an FNR target (then pick Delta at or below the bound),
/// eps = tau_P for an FPR target (pick Delta at or above it).
double epsilon_for_target(const ErrorRateTarget& target);

struct BoundComparisonRow {
  BoundKind kind = BoundKind::chebyshev;
  std::optional<ThresholdResult> result;
  std::string error;  // set when the bound is infeasible for these inputs
};

/// All three thresholds for the same (k, n, eps). For eps <= 0.1, k <= 32 and
/// n >= 1e4 it checks Chernoff <= sub-exponential and Chernoff <= Chebyshev,
/// throwing NumericalError otherwise.
std::vector<BoundComparisonRow> compare_bounds(std::size_t k, std::size_t n, double epsilon);

}  // namespace tesda
