#include "tesda/thresholds.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "tesda/error.hpp"

namespace tesda {
namespace {

void require_k(std::size_t k) {
  if (k == 0) throw ValidationError("threshold: dimension k must be >= 1");
}

void require_open_unit(double epsilon, const char* what) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ValidationError(std::string(what) + ": epsilon must lie in (0, 1), got " + std::to_string(epsilon));
  }
}

ThresholdResult make_result(BoundKind kind, double delta_sq, std::string note) {
  if (!std::isfinite(delta_sq) || !(delta_sq > 0.0)) {
    throw NumericalError(std::string(to_string(kind)) + ": non-finite or non-positive threshold");
  }
  return {std::sqrt(delta_sq), delta_sq, kind, std::move(note)};
}

}  // namespace

const char* to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::chebyshev: return "chebyshev";
    case BoundKind::subexponential: return "subexponential";
    case BoundKind::chernoff: return "chernoff";
  }
  return "?";
}

BoundKind bound_kind_from_string(const std::string& s) {
  if (s == "chebyshev") return BoundKind::chebyshev;
  if (s == "subexponential") return BoundKind::subexponential;
  if (s == "chernoff") return BoundKind::chernoff;
  throw ValidationError("unknown bound \"" + s + "\" (expected chebyshev, subexponential or chernoff)");
}

ThresholdResult delta_chebyshev(std::size_t k, std::size_t n, double epsilon) {
  require_k(k);
  require_open_unit(epsilon, "delta_chebyshev");
  const double dk = static_cast<double>(k);
  const double dn = static_cast<double>(n);
  const double denom = epsilon * dn * dn - 2.0 * dn * dk;
  if (!(denom > 0.0)) {
    throw NumericalError("delta_chebyshev: infeasible, need eps * n^2 - 2 n k > 0 (eps > 2k/n = " +
                         std::to_string(2.0 * dk / dn) + ")");
  }
  return make_result(BoundKind::chebyshev, dk * (dn * dn - 4.0) / denom, "non-trivial branch");
}

ThresholdResult delta_subexponential(std::size_t k, double epsilon) {
  require_k(k);
  require_open_unit(epsilon, "delta_subexponential");
  const double dk = static_cast<double>(k);
  const double log_inv = -std::log(epsilon);
  const double boundary = dk * dk + dk;  // Delta^2 where the two regimes meet

  // Gaussian regime: (Delta^2 - k)^2 / (8 k^2) = ln(1/eps).
  const double sq_a = dk + 2.0 * dk * std::sqrt(2.0 * log_inv);
  // Exponential regime: (Delta^2 - k) / 8 = ln(1/eps).
  const double sq_b = dk + 8.0 * log_inv;

  if (sq_a >= dk && sq_a <= boundary) {
    return make_result(BoundKind::subexponential, sq_a, "gaussian-regime: sqrt(k) <= Delta <= sqrt(k^2+k)");
  }
  if (sq_b > boundary) {
    return make_result(BoundKind::subexponential, sq_b, "exponential-regime: Delta > sqrt(k^2+k)");
  }
  // The regimes meet at Delta^2 = k^2 + k, so exactly one branch is
  // consistent; reaching here means rounding at the boundary.
  const double miss_a = sq_a < dk ? dk - sq_a : sq_a - boundary;
  const double miss_b = boundary - sq_b;
  return miss_a <= miss_b
             ? make_result(BoundKind::subexponential, sq_a, "warning: gaussian-regime candidate outside its range")
             : make_result(BoundKind::subexponential, sq_b, "warning: exponential-regime candidate outside its range");
}

double lambert_w_minus1(double a) {
  const double branch_point = -std::exp(-1.0);
  if (!(a < 0.0) || a < branch_point - 1e-15) {
    throw ValidationError("lambert_w_minus1: argument must lie in [-1/e, 0), got " + std::to_string(a));
  }
  const double p_sq = 2.0 * (std::numbers::e * a + 1.0);
  if (p_sq <= 0.0) return -1.0;

  double w;
  if (p_sq < 0.25) {
    // Branch-point series in p = -sqrt(2 (e a + 1)).
    const double p = -std::sqrt(p_sq);
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else {
    const double l1 = std::log(-a);
    w = l1 - std::log(-l1);
  }

  const double tol = 1e-13 * std::abs(a);
  for (int iter = 0; iter < 100; ++iter) {
    const double ew = std::exp(w);
    const double f = w * ew - a;
    if (std::abs(f) <= tol) break;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0) break;
    const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
    const double next = std::min(w - step, -1.0);
    if (next == w) break;
    w = next;
  }
  const double residual = std::abs(w * std::exp(w) - a);
  if (!(residual <= 1e-12 * std::abs(a))) {
    throw NumericalError("lambert_w_minus1: no convergence for a = " + std::to_string(a));
  }
  return w;
}

ThresholdResult delta_chernoff(std::size_t k, double epsilon) {
  require_k(k);
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw ValidationError("delta_chernoff: epsilon must lie in (0, 1], got " + std::to_string(epsilon));
  }
  const double dk = static_cast<double>(k);
  const double a = -std::pow(epsilon, 2.0 / dk) / std::numbers::e;
  const double w = lambert_w_minus1(std::max(a, -std::exp(-1.0)));
  return make_result(BoundKind::chernoff, -dk * w, "lambert W_{-1} branch");
}

double epsilon_for_target(const ErrorRateTarget& target) {
  if (!(target.tau > 0.0 && target.tau < 1.0)) {
    throw ValidationError("target rate must lie in (0, 1), got " + std::to_string(target.tau));
  }
  return target.kind == ErrorRateTarget::Kind::fnr ? 1.0 - target.tau : target.tau;
}

std::vector<BoundComparisonRow> compare_bounds(std::size_t k, std::size_t n, double epsilon) {
  std::vector<BoundComparisonRow> rows;
  for (auto kind : {BoundKind::chebyshev, BoundKind::subexponential, BoundKind::chernoff}) {
    BoundComparisonRow row;
    row.kind = kind;
    try {
      switch (kind) {
        case BoundKind::chebyshev: row.result = delta_chebyshev(k, n, epsilon); break;
        case BoundKind::subexponential: row.result = delta_subexponential(k, epsilon); break;
        case BoundKind::chernoff: row.result = delta_chernoff(k, epsilon); break;
      }
    } catch (const NumericalError& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }

  if (epsilon <= 0.1 && k <= 32 && n >= 10000) {
    const auto& cheb = rows[0].result;
    const auto& sub = rows[1].result;
    const auto& cher = rows[2].result;
    if (cher && sub && cher->delta > sub->delta) {
      throw NumericalError("compare_bounds: Chernoff threshold exceeds sub-exponential threshold");
    }
    if (cher && cheb && cher->delta > cheb->delta) {
      throw NumericalError("compare_bounds: Chernoff threshold exceeds Chebyshev threshold");
    }
  }
  return rows;
}

}  // namespace tesda
