#pragma once

// Incomplete gamma and chi-squared distribution functions.

namespace tesda::special {

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed directly
/// on the continued-fraction side so small tails keep relative accuracy.
double gamma_q(double a, double x);

double chi2_cdf(double k, double x);
double chi2_sf(double k, double x);
double chi2_pdf(double k, double x);

/// Inverse CDF: the x with chi2_cdf(k, x) == p, p in (0, 1).
double chi2_quantile(double k, double p);

}  // namespace tesda::special
