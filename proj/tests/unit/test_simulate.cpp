#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chi2sets/error.hpp"
#include "chi2sets/simulate.hpp"
#include "chi2sets/special.hpp"
#include "oracles/oracles.hpp"

using namespace chi2sets;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.n = 80;
  c.p = 30;
  c.J = {0, 2, 3};
  c.replications = 12;
  c.base_seed = 42;
  c.has_seed = true;
  c.lambda_srl.kind = SrlLambdaRule::Kind::Explicit;
  c.lambda_srl.value = 0.3;
  c.lambda_msrl.kind = MsrlLambdaRule::Kind::Explicit;
  c.lambda_msrl.value = 0.3;
  return c;
}

bool same(const ReplicationRecord& a, const ReplicationRecord& b) {
  return a.chi2_stat == b.chi2_stat && a.covered == b.covered && a.sigma_hat == b.sigma_hat &&
         a.rem_linf_bound == b.rem_linf_bound && a.kkt_sqrt == b.kkt_sqrt && a.kkt_nuisance == b.kkt_nuisance &&
         a.seed_used == b.seed_used && a.error == b.error;
}

}  // namespace

TEST_CASE("design generator") {
  SUBCASE("deterministic") {
    const Matrix a = gen_design(20, 5, 0.9, 7);
    const Matrix b = gen_design(20, 5, 0.9, 7);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a - gen_design(20, 5, 0.9, 8)).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("independent columns at rho = 0") {
    const Index n = 10000;
    const Matrix x = gen_design(n, 4, 0.0, 3);
    const Matrix c = x.transpose() * x / static_cast<double>(n);
    double off = 0;
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j)
        if (i != j) off = std::max(off, std::fabs(c(i, j)));
    CHECK(off <= 5.0 / std::sqrt(static_cast<double>(n)));
  }
  SUBCASE("Toeplitz covariance") {
    const Index n = 50000;
    const Matrix x = gen_design(n, 3, 0.9, 5);
    const Matrix c = x.transpose() * x / static_cast<double>(n);
    CHECK(std::fabs(c(0, 2) - 0.81) < 0.02);
    CHECK(std::fabs(c(0, 1) - 0.9) < 0.02);
  }
}

TEST_CASE("coefficient generator") {
  CHECK(gen_beta(10, {}, 1, 4, 3).cwiseAbs().maxCoeff() == 0.0);
  const Vector b = gen_beta(40, {0, 2, 3, 7, 9, 32}, 1, 4, 3);
  int nz = 0;
  for (Index j = 0; j < 40; ++j) {
    if (b(j) != 0) {
      ++nz;
      CHECK(b(j) >= 1.0);
      CHECK(b(j) <= 4.0);
    }
  }
  CHECK(nz == 6);
  CHECK(b(32) != 0);
  CHECK((b - gen_beta(40, {0, 2, 3, 7, 9, 32}, 1, 4, 3)).norm() == 0.0);
}

TEST_CASE("cross-validation") {
  const Matrix x = gen_design(100, 20, 0.5, 9);
  const IndexSet J{0, 5};
  CHECK(cross_validate_lambda(x, J, 5, {0.37}, 1).lambda == 0.37);
  const CrossValidationResult cv = cross_validate_lambda(x, J, 5, {0.2, 1e6}, 1);
  REQUIRE(cv.mean_score.size() == 2);
  CHECK(cv.lambda == (cv.mean_score[1] < cv.mean_score[0] ? 1e6 : 0.2));
  // correlated columns: the null model predicts worse than a real fit
  CHECK(cv.lambda == 0.2);
  // identical grid points tie; the larger one wins
  const CrossValidationResult tie = cross_validate_lambda(x, J, 5, {1e6, 2e6}, 1);
  CHECK(tie.mean_score[0] == tie.mean_score[1]);
  CHECK(tie.lambda == 2e6);
  CHECK_THROWS_AS(cross_validate_lambda(x, J, 1, {0.2}, 1), InvalidInput);
  CHECK_THROWS_AS(cross_validate_lambda(x, J, 5, {}, 1), InvalidInput);
}

TEST_CASE("KS distance") {
  CHECK(ks_distance({chi2_quantile(0.5, 6)}, 6) == doctest::Approx(0.5).epsilon(1e-12));
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  std::vector<double> s(5000);
  for (auto& v : s) {
    v = 0;
    for (int k = 0; k < 6; ++k) {
      const double z = nd(gen);
      v += z * z;
    }
  }
  CHECK(ks_distance(s, 6) <= 0.03);
  CHECK(ks_distance(s, 2) > 0.3);
  CHECK_THROWS_AS(ks_distance({}, 3), InvalidInput);
}

TEST_CASE("serial and parallel replications agree exactly") {
  const ExperimentContext ctx = prepare_experiment(small_config());
  const auto a = run_replications_serial(ctx);
  for (int threads : {1, 2, 3}) {
    const auto b = run_replications_parallel(ctx, threads);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(same(a[i], b[i]));
  }
  const ReplicationRecord r = run_replication(ctx, 5);
  CHECK(same(r, a[5]));
}

TEST_CASE("experiment summary") {
  ExperimentConfig c = small_config();
  const ExperimentResult res = run_experiment(c, 2);
  long mass = 0;
  for (long h : res.summary.histogram) mass += h;
  CHECK(mass == res.summary.used);
  CHECK(res.summary.used + res.summary.excluded == c.replications);
  CHECK(res.summary.quantile == doctest::Approx(chi2_quantile(0.95, 3)));
  for (const auto& r : res.records) CHECK(r.chi2_stat >= 0.0);
  c.replications = 1;
  const ExperimentResult one = run_experiment(c, 1);
  CHECK(same(one.records[0], res.records[0]));
  mass = 0;
  for (long h : one.summary.histogram) mass += h;
  CHECK(mass == 1);
}

TEST_CASE("failed replications are excluded and counted") {
  std::vector<ReplicationRecord> recs(4);
  for (int i = 0; i < 4; ++i) {
    recs[static_cast<std::size_t>(i)].rep_index = i;
    recs[static_cast<std::size_t>(i)].chi2_stat = 1.0 + i;
    recs[static_cast<std::size_t>(i)].covered = true;
  }
  recs[2].error = "degenerate fit";
  recs[3].chi2_stat = 100.0;
  recs[3].covered = false;
  const ExperimentSummary s = summarize(recs, 2, chi2_quantile(0.95, 2));
  CHECK(s.excluded == 1);
  CHECK(s.used == 3);
  CHECK(s.coverage == doctest::Approx(2.0 / 3.0));
  CHECK(s.mean_stat == doctest::Approx((1.0 + 2.0 + 100.0) / 3.0));
  CHECK(s.histogram[static_cast<std::size_t>(kHistogramBins)] == 1);
}

TEST_CASE("verify mode runs every check") {
  ExperimentConfig c = small_config();
  c.n = 60;
  c.p = 8;
  c.J = {0, 1};
  c.signal_lo = 0.002;
  c.signal_hi = 0.004;
  c.rho = 0.5;
  c.replications = 40;
  c.lambda_srl.kind = SrlLambdaRule::Kind::TheoryMultiple;
  c.lambda_srl.value = 1.0;
  const VerifyReport v = run_verification(c, 1);
  CHECK(v.passed());
  CHECK(v.theorem1_checked == 40);
  CHECK(v.theorem1_failures == 0);
  CHECK(v.oracle_available);
  CHECK(v.oracle_applicable > 30);
  CHECK(v.oracle_failures == 0);
}

TEST_CASE("config validation") {
  ExperimentConfig c = small_config();
  c.J = {0, 40};
  CHECK_THROWS_AS(validate(c), InvalidInput);
  c = small_config();
  c.alpha = 1.0;
  CHECK_THROWS_AS(validate(c), InvalidInput);
  c = small_config();
  c.replications = 0;
  CHECK_THROWS_AS(validate(c), InvalidInput);
  c = small_config();
  c.has_seed = false;
  CHECK_THROWS_AS(run_experiment(c), InvalidInput);
}

TEST_CASE("level plot and sweep") {
  ExperimentConfig c = small_config();
  c.replications = 4;
  c.levelplot_n = {60, 80};
  c.levelplot_p = {20, 90};
  const auto cells = run_levelplot(c, 1);
  REQUIRE(cells.size() == 4);
  for (const auto& cell : cells) {
    if (cell.error.empty()) CHECK(cell.summary.used + cell.summary.excluded == 4);
  }
  const auto pts = run_lambda_sweep(c, {0.1, 2.0}, 1);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].lambda == 0.1);
}
