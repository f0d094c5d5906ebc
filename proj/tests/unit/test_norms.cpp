#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chi2sets/error.hpp"
#include "chi2sets/norms.hpp"
#include "oracles/oracles.hpp"

using namespace chi2sets;

TEST_CASE("soft threshold is the prox of the absolute value") {
  for (double v : {-3.0, -1.0, -0.2, 0.0, 0.3, 0.99, 2.5}) {
    for (double eta : {0.0, 0.25, 1.0}) {
      // golden section resolves a quadratic minimum to about sqrt(eps)
      CHECK(std::fabs(soft_threshold(v, eta) - oracle::prox_abs(v, eta)) < 1e-7);
    }
  }
  CHECK(soft_threshold(0.5, 1.0) == 0.0);
  CHECK(soft_threshold(-2.0, 0.5) == -1.5);
}

TEST_CASE("block soft threshold minimizes along the ray") {
  const Vector v = oracle::gaussian(4, 1, 17).col(0);
  const double r = v.norm();
  for (double eta : {0.1, 0.5 * r, 2.0 * r}) {
    const Vector b = block_soft_threshold(v, eta);
    // the minimizer lies on the ray through v; search its length directly
    const double t = oracle::golden_min([&](double s) { return 0.5 * (s - r) * (s - r) + eta * std::fabs(s); }, -1, r + 1);
    CHECK(std::fabs(b.norm() - std::max(t, 0.0)) < 1e-7);
    if (b.norm() > 0) CHECK((b / b.norm() - v / r).norm() < 1e-12);
  }
  CHECK(block_soft_threshold(Vector::Zero(3), 1.0).norm() == 0.0);
}

TEST_CASE("penalty value, dual and Hoelder") {
  const NormSpec spec = NormSpec::group({{0, 1, 2}, {4, 5}});
  const Penalty pen(spec, 7);
  // coordinates 3 and 6 become singleton groups
  CHECK(pen.blocks().size() == 4);
  Vector a(7);
  a << 1, 2, 2, -1, 3, 4, 0.5;
  CHECK(pen.value(a) == doctest::Approx(std::sqrt(3.0) * 3 + 1 + std::sqrt(2.0) * 5 + 0.5));
  std::mt19937_64 gen(3);
  for (int t = 0; t < 200; ++t) {
    const Vector u = oracle::gaussian(7, 1, gen()).col(0);
    const Vector z = oracle::gaussian(7, 1, gen()).col(0);
    CHECK(u.dot(z) <= pen.value(u) * pen.dual(z) * (1 + 1e-12));
  }
  // attained: put all mass on the block that realizes the dual
  Vector z(7);
  z << 0, 0, 0, 0, 3, 4, 0;
  Vector u = Vector::Zero(7);
  u(4) = 3.0 / 5.0, u(5) = 4.0 / 5.0;
  CHECK(u.dot(z) == doctest::Approx(pen.value(u) * pen.dual(z)));
}

TEST_CASE("l1 penalty") {
  const Penalty pen(NormSpec::l1(), 3);
  Vector a(3);
  a << -1, 2, 0.5;
  CHECK(pen.value(a) == doctest::Approx(3.5));
  CHECK(pen.dual(a) == doctest::Approx(2.0));
  Matrix m(3, 2);
  m << 1, -3, 0, 0, 2, 1;
  CHECK(pen.value(m) == doctest::Approx(7.0));
  CHECK(pen.dual(m) == doctest::Approx(3.0));
  const Matrix pm = pen.prox(m, 1.5);
  CHECK(pm(0, 0) == 0.0);
  CHECK(pm(0, 1) == doctest::Approx(-1.5));
  CHECK(pm(2, 0) == doctest::Approx(0.5));
}

TEST_CASE("group prox uses sqrt(|G|) weighted thresholds") {
  const Penalty pen(NormSpec::group({{0, 1}}), 3);
  Matrix v(3, 1);
  v << 3, 4, 1;
  const Matrix p = pen.prox(v, 1.0);
  const double shrink = (5.0 - std::sqrt(2.0)) / 5.0;
  CHECK(p(0, 0) == doctest::Approx(3 * shrink));
  CHECK(p(1, 0) == doctest::Approx(4 * shrink));
  CHECK(p(2, 0) == 0.0);
}

TEST_CASE("group specs are validated and restrict cleanly") {
  CHECK_THROWS_AS(NormSpec::group({{0, 1}, {1, 2}}), InvalidInput);
  CHECK_THROWS_AS(NormSpec::group({{}}), InvalidInput);
  CHECK_THROWS_AS(Penalty(NormSpec::group({{0, 9}}), 3), InvalidInput);
  const NormSpec r = NormSpec::group({{0, 2, 4}, {1, 3}}).restricted_to({2, 3, 4});
  // keep {2,3,4} → new coordinates 0,1,2; group {0,2,4} becomes {0,2}, {1,3} becomes {1}
  const Penalty pen(r, 3);
  Vector a(3);
  a << 3, 1, 4;
  CHECK(pen.value(a) == doctest::Approx(std::sqrt(2.0) * 5 + 1));
}

TEST_CASE("x-weighted group norm") {
  Matrix x = Matrix::Identity(3, 3) * 2.0;
  Vector b(3);
  b << 3, 4, 1;
  CHECK(x_weighted_group_norm(x, b, {{0, 1}, {2}}) == doctest::Approx(std::sqrt(2.0) * 10 + 2));
}
