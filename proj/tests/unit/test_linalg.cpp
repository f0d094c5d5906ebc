#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chi2sets/error.hpp"
#include "chi2sets/linalg.hpp"
#include "oracles/oracles.hpp"

using namespace chi2sets;

TEST_CASE("nuclear norm matches the Jacobi oracle on random shapes") {
  std::mt19937_64 gen(11);
  for (int t = 0; t < 200; ++t) {
    const Index r = 1 + static_cast<Index>(gen() % 20), c = 1 + static_cast<Index>(gen() % 10);
    const Matrix a = oracle::gaussian(r, c, gen());
    const double ref = static_cast<double>(oracle::nuclear_norm(a));
    CHECK(nuclear_norm(a) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("nuclear norm of simple matrices") {
  CHECK(nuclear_norm(Matrix::Identity(4, 4)) == doctest::Approx(4.0));
  CHECK(nuclear_norm(Matrix::Zero(3, 2)) == 0.0);
  Matrix v(3, 1);
  v << 3, 4, 0;
  CHECK(nuclear_norm(v) == doctest::Approx(5.0));
  Matrix bad = Matrix::Ones(2, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(nuclear_norm(bad), InvalidInput);
}

TEST_CASE("singular values are descending and match the oracle") {
  const Matrix a = oracle::gaussian(7, 4, 3);
  const Vector s = singular_values(a);
  const auto ref = oracle::jacobi_singular_values(a);
  REQUIRE(s.size() == 4);
  for (Index i = 0; i < 4; ++i) {
    CHECK(s(i) == doctest::Approx(static_cast<double>(ref[static_cast<std::size_t>(i)])).epsilon(1e-12));
    if (i) CHECK(s(i) <= s(i - 1));
  }
}

TEST_CASE("max eigenvalue and inverse square root") {
  const Matrix g = oracle::gaussian(30, 5, 5);
  const Matrix s = g.transpose() * g / 30.0;
  const auto ev = oracle::jacobi_eigenvalues(s);
  CHECK(max_eigenvalue(s) == doctest::Approx(static_cast<double>(ev.back())).epsilon(1e-12));
  const Matrix r = psd_inv_sqrt(s);
  CHECK((r * s * r - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(asymmetry(r) < 1e-14);
  const Matrix h = psd_sqrt(s);
  CHECK((h * h - s).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inverse square root refuses singular input") {
  Matrix s = Matrix::Zero(2, 2);
  s(0, 0) = 1.0;
  CHECK_THROWS_AS(psd_inv_sqrt(s), SingularMatrix);
  try {
    psd_inv_sqrt(s);
  } catch (const SingularMatrix& e) {
    CHECK(e.condition() < kDefaultRcond);
  }
}

TEST_CASE("toeplitz covariance") {
  const Matrix t = toeplitz_cov(4, 0.9);
  CHECK(t(0, 0) == 1.0);
  CHECK(t(0, 2) == doctest::Approx(0.81));
  CHECK(t(3, 0) == doctest::Approx(0.729));
  CHECK(asymmetry(t) == 0.0);
  CHECK_THROWS_AS(toeplitz_cov(3, 1.0), InvalidInput);
}

TEST_CASE("index helpers") {
  const IndexSet c = complement({1, 3}, 5);
  CHECK(c == IndexSet{0, 2, 4});
  Matrix x = Matrix::Zero(2, 5);
  x.row(0) << 0, 1, 2, 3, 4;
  CHECK(select_cols(x, {1, 3}).row(0)(1) == 3.0);
  Vector v(3);
  v << 5, 6, 7;
  CHECK(select(v, {2})(0) == 7.0);
  CHECK_THROWS_AS(check_index_set({2, 1}, 5, "J"), InvalidInput);
  CHECK_THROWS_AS(check_index_set({1, 5}, 5, "J"), InvalidInput);
  CHECK_THROWS_AS(check_index_set({1, 1}, 5, "J"), InvalidInput);
  CHECK_NOTHROW(check_index_set({}, 5, "J"));
  Vector e(4);
  e << 1, 1, 1, 1;
  CHECK(norm_n(e) == doctest::Approx(1.0));
}
