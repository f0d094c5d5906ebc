#include "chi2sets/special.hpp"

#include <cmath>
#include <limits>

#include "chi2sets/error.hpp"

namespace chi2sets {

namespace {

constexpr int kMaxTerms = 10000;
constexpr double kEps = 1e-16;

double lower_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double term = sum;
  for (int k = 0; k < kMaxTerms; ++k) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double upper_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

void check_args(double a, double x) {
  if (!(a > 0.0)) throw InvalidInput("incomplete gamma: shape must be > 0");
  if (!(x >= 0.0)) throw InvalidInput("incomplete gamma: x must be >= 0");
}

}  // namespace

double gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return x < a + 1.0 ? lower_series(a, x) : 1.0 - upper_fraction(a, x);
}

double gamma_q(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return x < a + 1.0 ? 1.0 - lower_series(a, x) : upper_fraction(a, x);
}

double chi2_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * x);
}

double chi2_pdf(double x, double dof) {
  if (!(dof > 0.0)) throw InvalidInput("chi2_pdf: dof must be > 0");
  if (x < 0.0) return 0.0;
  const double k = 0.5 * dof;
  if (x == 0.0) return k < 1.0 ? std::numeric_limits<double>::infinity() : (k == 1.0 ? 0.5 : 0.0);
  return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k));
}

double chi2_quantile(double prob, double dof) {
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidInput("chi2_quantile: prob must lie in (0, 1)");
  if (!(dof > 0.0)) throw InvalidInput("chi2_quantile: dof must be > 0");
  // Bracket, then safeguarded Newton. Work on whichever tail is smaller so
  // the residual keeps full relative precision.
  const bool upper = prob > 0.5;
  const double target = upper ? 1.0 - prob : prob;
  auto residual = [&](double x) { return upper ? chi2_sf(x, dof) - target : chi2_cdf(x, dof) - target; };
  // residual is decreasing in x for the upper tail and increasing for the lower
  const double sign = upper ? -1.0 : 1.0;

  double lo = 0.0;
  double hi = std::max(1.0, dof);
  while (sign * residual(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double r = residual(x);
    if (sign * r < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double slope = sign * chi2_pdf(x, dof);
    double next = slope != 0.0 ? x - r / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

}  // namespace chi2sets
