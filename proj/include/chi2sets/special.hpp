#pragma once

namespace chi2sets {

/// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
/// Series below x = a + 1, Lentz continued fraction for Q above.
double gamma_p(double a, double x);
/// Upper tail Q(a, x) = 1 - P(a, x), computed without cancellation.
double gamma_q(double a, double x);

double chi2_cdf(double x, double dof);
/// Survival function 1 - F(x).
double chi2_sf(double x, double dof);
/// Inverse CDF; requires 0 < prob < 1.
double chi2_quantile(double prob, double dof);
/// Density, for plot reference columns.
double chi2_pdf(double x, double dof);

}  // namespace chi2sets
