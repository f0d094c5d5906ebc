#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chi2sets/error.hpp"
#include "chi2sets/theory.hpp"
#include "oracles/oracles.hpp"

using namespace chi2sets;

namespace {

// √n·Q·U with Q orthonormal columns gives XᵀX/n = UᵀU exactly (up to rounding).
Matrix design_with_gram(Index n, const Matrix& gram, std::uint64_t seed) {
  const Index p = gram.rows();
  const Matrix q = Eigen::HouseholderQR<Matrix>(oracle::gaussian(n, p, seed)).householderQ() * Matrix::Identity(n, p);
  const Matrix u = gram.llt().matrixU();
  return std::sqrt(static_cast<double>(n)) * q * u;
}

Matrix normalized(Matrix x) {
  for (Index j = 0; j < x.cols(); ++j) x.col(j) /= norm_n(x.col(j));
  return x;
}

}  // namespace

TEST_CASE("gaussian bounds by substitution") {
  const double e1 = std::exp(-1.0);
  const GaussianBounds b = gaussian_bounds(100, 10, 1.0, 0.05, e1, e1);
  CHECK(b.sigma_lower_sq == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(b.sigma_upper_sq == doctest::Approx(1.22).epsilon(1e-14));
  CHECK(b.R == doctest::Approx(std::sqrt(std::log(2 * 10 / 0.05) / (100 - 2 * std::sqrt(100.0)))).epsilon(1e-14));
  CHECK(b.sigma_lower() == doctest::Approx(std::sqrt(0.8)));
  const GaussianBounds b2 = gaussian_bounds(400, 150, 2.0, 0.05, 0.05, 0.05);
  CHECK(b2.sigma_lower_sq < 4.0);
  CHECK(b2.sigma_upper_sq > 4.0);
  CHECK_THROWS_AS(gaussian_bounds(100, 10, 1.0, 0.5, 0.3, 0.3), InvalidInput);
  CHECK_THROWS_AS(gaussian_bounds(8, 10, 1.0, 0.05, 1e-3, 0.05), InvalidInput);
}

TEST_CASE("gaussian tail frequencies") {
  const Index n = 50, p = 20;
  const Matrix x = normalized(oracle::gaussian(n, p, 31));
  const GaussianBounds b = gaussian_bounds(n, p, 1.0, 0.05, 0.05, 0.05);
  const int m = 4000;
  int low = 0, high = 0, uni = 0;
  std::mt19937_64 gen(77);
  std::normal_distribution<double> nd;
  for (int i = 0; i < m; ++i) {
    Vector e(n);
    for (Index k = 0; k < n; ++k) e(k) = nd(gen);
    const double en = norm_n(e);
    low += en <= b.sigma_lower();
    high += en >= b.sigma_upper();
    uni += (en <= b.sigma_lower()) || (empirical_R_hat(x, e) >= b.R);
  }
  auto ok = [&](int c, double level) { return c / double(m) <= level + 3 * std::sqrt(level * (1 - level) / m); };
  CHECK(ok(low, 0.05));
  CHECK(ok(high, 0.05));
  CHECK(ok(uni, 0.10));
}

TEST_CASE("empirical R hat") {
  const Matrix x = normalized(oracle::gaussian(30, 4, 3));
  const Vector e1 = x.col(0);
  double expect = 0;
  for (Index j = 0; j < 4; ++j) expect = std::max(expect, std::fabs(x.col(j).dot(e1)) / 30.0);
  CHECK(empirical_R_hat(x, e1) == doctest::Approx(expect));
  CHECK(empirical_R_hat(x, e1) >= 1.0 - 1e-12);
  // a residual from least squares is orthogonal to every column
  const Vector y = oracle::gaussian(30, 1, 4).col(0);
  const Vector r = y - x * x.colPivHouseholderQr().solve(y);
  CHECK(empirical_R_hat(x, r) < 1e-12);
  CHECK_THROWS_AS(empirical_R_hat(x, Vector::Zero(30)), InvalidInput);
}

TEST_CASE("l1 sparsity condition boundary") {
  const double eta = 1.0 / 3.0, lam = 0.5, sl = 0.9;
  CHECK(l1_sparsity_level(eta) == doctest::Approx(2 * (std::sqrt(1 + eta * eta / 4) - 1)));
  CHECK(l1_sparsity_check(Vector::Zero(5), lam, sl, eta));
  Vector b = Vector::Zero(5);
  b(1) = l1_sparsity_level(eta) * sl / lam;
  CHECK(l1_sparsity_check(b, lam, sl, eta));
  b(1) *= 1 + 1e-9;
  CHECK_FALSE(l1_sparsity_check(b, lam, sl, eta));
}

TEST_CASE("sigma consistency: zero solution is exact") {
  const Matrix x = normalized(oracle::gaussian(80, 10, 5));
  const Vector eps = oracle::gaussian(80, 1, 6).col(0);
  const double lam = 1.01 * empirical_R_hat(x, eps);
  const SqrtLassoFit fit = fit_sqrt_lasso(x, eps, lam);
  CHECK(fit.beta_hat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.sigma_hat == doctest::Approx(norm_n(eps)).epsilon(1e-15));
  CHECK(sigma_consistency_check(fit, eps, 1e-12));
}

TEST_CASE("compatibility: identity Gram on the full set") {
  const Matrix x = design_with_gram(20, Matrix::Identity(4, 4), 1);
  const CompatibilityResult r = compatibility_constant(x, {0, 1, 2, 3}, 2.0);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.lower_bound <= r.value);
  CHECK(r.exact);
}

TEST_CASE("compatibility: two columns with correlation rho") {
  for (double rho : {0.3, 0.6, -0.8}) {
    Matrix g(2, 2);
    g << 1, rho, rho, 1;
    const Matrix x = design_with_gram(10, g, 2);
    for (double L : {std::fabs(rho), 1.0, 5.0}) {
      const CompatibilityResult r = compatibility_constant(x, {0}, L);
      CHECK(r.value == doctest::Approx(1 - rho * rho).epsilon(1e-6));
    }
    // L below |rho| keeps β₂ at the boundary: value (1 - 2|rho|L + L²)
    const double L = 0.5 * std::fabs(rho);
    CHECK(compatibility_constant(x, {0}, L).value ==
          doctest::Approx(1 - 2 * std::fabs(rho) * L + L * L).epsilon(1e-6));
  }
}

TEST_CASE("compatibility: exact mode agrees with the grid oracle") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    Matrix x = oracle::gaussian(30, 6, 40 + s);
    for (Index k = 1; k < 6; ++k) x.col(k) = 0.5 * x.col(k - 1) + x.col(k);
    const int a = static_cast<int>(s % 3), b = 3 + static_cast<int>(s % 2);
    const double ref = oracle::compatibility_s2(x, a, b, 6.0);
    const CompatibilityResult r = compatibility_constant(x, {a, b}, 6.0);
    CHECK(r.value == doctest::Approx(ref).epsilon(1e-4).scale(1e-4));
    CHECK(r.lower_bound <= ref + 1e-9);
  }
}

TEST_CASE("compatibility: monotone in L and at most one for normalized columns") {
  const Matrix x = normalized(oracle::gaussian(25, 7, 9));
  double prev = 2.0;
  for (double L : {0.0, 0.5, 1.0, 3.0, 6.0}) {
    const double v = compatibility_constant(x, {1, 4, 5}, L).value;
    CHECK(v <= prev + 1e-7);
    CHECK(v <= 1.0 + 1e-9);
    prev = v;
  }
}

TEST_CASE("compatibility: heuristic mode and limits") {
  const Matrix x = oracle::gaussian(40, 16, 3);
  const IndexSet s{0, 1, 2, 3, 4, 5};
  const CompatibilityResult ex = compatibility_constant(x, s, 1.0);
  CompatibilityOptions few;
  few.heuristic_patterns = 8;
  // fewer samples than the 32 patterns: flagged, and never below the minimum
  const CompatibilityResult he = compatibility_constant(x, s, 1.0, CompatibilityMode::LowerHeuristic, few);
  CHECK_FALSE(he.exact);
  CHECK(he.value >= ex.value - 1e-7);
  // with room for every pattern the heuristic enumerates them all
  CHECK(compatibility_constant(x, s, 1.0, CompatibilityMode::LowerHeuristic).exact);
  IndexSet big;
  for (Index j = 0; j < 13; ++j) big.push_back(j);
  CHECK_THROWS_AS(compatibility_constant(x, big, 1.0), InvalidInput);
  CHECK_THROWS_AS(compatibility_constant(x, {}, 1.0), InvalidInput);
}

TEST_CASE("oracle inequality: zero truth") {
  const Index n = 60, p = 8;
  const Matrix x = normalized(oracle::gaussian(n, p, 8));
  const GaussianBounds gb = gaussian_bounds(n, p, 1.0, 0.05, 0.05, 0.05);
  OracleSettings st;
  st.R = gb.R;
  st.sigma_lower = gb.sigma_lower();
  const double lam = 2 * gb.R / (1 - st.eta);
  int applicable = 0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Vector eps = oracle::gaussian(n, 1, 300 + s).col(0);
    const SqrtLassoFit fit = fit_sqrt_lasso(x, eps, lam);
    const OracleReport r = oracle_inequality_check(fit, x, Vector::Zero(p), eps, st);
    if (!r.applicable) continue;
    ++applicable;
    CHECK(r.lambda_under > 0);
    CHECK(r.L <= 6.0 + 1e-12);
    // the empty set gives rhs 0, which forces β̂ = 0
    CHECK(r.rhs == 0.0);
    CHECK(r.holds);
    CHECK(r.lhs == 0.0);
  }
  CHECK(applicable > 20);
}

TEST_CASE("oracle inequality on a small sparse instance") {
  const Index n = 60, p = 8;
  Matrix x = oracle::gaussian(n, p, 18);
  for (Index k = 1; k < p; ++k) x.col(k) = 0.5 * x.col(k - 1) + x.col(k);
  x = normalized(x);
  const GaussianBounds gb = gaussian_bounds(n, p, 1.0, 0.05, 0.05, 0.05);
  OracleSettings st;
  st.R = gb.R;
  st.sigma_lower = gb.sigma_lower();
  const double lam = 2 * gb.R / (1 - st.eta);
  Vector beta0 = Vector::Zero(p);
  beta0(0) = 0.6, beta0(1) = -0.4;
  beta0 *= l1_sparsity_level(st.eta) * st.sigma_lower / lam;  // on the boundary, ‖β⁰‖₁ = level·σ̲/λ0
  REQUIRE(l1_sparsity_check(beta0 * (1 - 1e-12), lam, st.sigma_lower, st.eta));
  int applicable = 0;
  for (std::uint64_t s = 0; s < 25; ++s) {
    const Vector eps = oracle::gaussian(n, 1, 900 + s).col(0);
    const Vector y = x * beta0 + eps;
    const SqrtLassoFit fit = fit_sqrt_lasso(x, y, lam);
    const OracleReport r = oracle_inequality_check(fit, x, beta0 * (1 - 1e-12), eps, st);
    if (!r.applicable) continue;
    ++applicable;
    CHECK(r.holds);
    CHECK(r.lhs <= r.rhs);
    bool has_s0 = false;
    for (const auto& c : r.candidates) has_s0 |= c.S == IndexSet{0, 1};
    CHECK(has_s0);
  }
  CHECK(applicable > 15);
}

TEST_CASE("candidate sets") {
  Vector b = Vector::Zero(5);
  b(1) = 1, b(3) = -2;
  const auto c = oracle_candidate_sets(b, true);
  CHECK(c.front() == IndexSet{1, 3});
  CHECK(std::find(c.begin(), c.end(), IndexSet{}) != c.end());
  CHECK(std::find(c.begin(), c.end(), IndexSet{3}) != c.end());
  CHECK(oracle_candidate_sets(b, false).size() == 1);
}

TEST_CASE("sparsity bounds") {
  const Index n = 100, p = 10;
  const Matrix x = normalized(oracle::gaussian(n, p, 4));
  const GaussianBounds gb = gaussian_bounds(n, p, 1.0, 0.05, 0.05, 0.05);
  const double eta = 1.0 / 3.0;
  SUBCASE("zero truth") {
    const SparsityReport r = weak_sparsity_bounds(Vector::Zero(p), 1.0, gb.R, gb.sigma_lower(), eta, x, 0.5);
    CHECK(r.s0 == 0);
    CHECK(r.l0_bound >= 0.0);
    CHECK(r.lr_bound >= 0.0);
    CHECK(r.L <= 6.0 + 1e-12);
  }
  SUBCASE("realized error below the l0 bound on event draws") {
    Vector beta0 = Vector::Zero(p);
    beta0(2) = 0.05, beta0(5) = 0.03;
    const double lam = 2 * gb.R / (1 - eta);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Vector eps = oracle::gaussian(n, 1, 60 + s).col(0);
      if (norm_n(eps) < gb.sigma_lower() || empirical_R_hat(x, eps) > gb.R) continue;
      const SqrtLassoFit fit = fit_sqrt_lasso(x, x * beta0 + eps, lam);
      const SparsityReport r = weak_sparsity_bounds(beta0, norm_n(eps), gb.R, gb.sigma_lower(), eta, x, 0.5);
      CHECK(r.s0 == 2);
      CHECK(r.Lambda_max_S0 > 0);
      CHECK((fit.beta_hat - beta0).lpNorm<1>() / norm_n(eps) <= r.l0_bound);
    }
  }
  CHECK_THROWS_AS(weak_sparsity_bounds(Vector::Zero(p), 1.0, gb.R, gb.sigma_lower(), eta, x, 1.5), InvalidInput);
}
