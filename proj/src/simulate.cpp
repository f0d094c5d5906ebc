#include "chi2sets/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <omp.h>

#include "chi2sets/error.hpp"
#include "chi2sets/rng.hpp"
#include "chi2sets/special.hpp"

namespace chi2sets {

std::vector<double> default_cv_grid() {
  constexpr int kPoints = 30;
  const double lo = std::log(0.01);
  const double hi = std::log(3.0);
  std::vector<double> grid(kPoints);
  for (int i = 0; i < kPoints; ++i) grid[i] = std::exp(lo + (hi - lo) * i / (kPoints - 1));
  return grid;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.n < 2 || cfg.p < 2) throw InvalidInput("config: n and p must be >= 2");
  if (cfg.J.empty()) throw InvalidInput("config: J must be non-empty");
  check_index_set(cfg.J, cfg.p, "config J");
  if (static_cast<Index>(cfg.J.size()) >= cfg.p) throw InvalidInput("config: J must be a proper subset");
  check_index_set(cfg.support(), cfg.p, "config S0");
  if (cfg.replications < 1) throw InvalidInput("config: replications must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InvalidInput("config: alpha must lie in (0, 1)");
  if (!(std::abs(cfg.rho) < 1.0)) throw InvalidInput("config: |rho| must be < 1");
  if (!(cfg.sigma0 > 0.0)) throw InvalidInput("config: sigma0 must be > 0");
  if (!(cfg.signal_lo <= cfg.signal_hi)) throw InvalidInput("config: signal_range must be increasing");
  if (cfg.cv_folds < 2) throw InvalidInput("config: cv_folds must be >= 2");
  if (!cfg.has_seed) throw InvalidInput("config: base_seed is required");
  if (!(cfg.lambda_srl.value > 0.0)) throw InvalidInput("config: lambda_srl must be > 0");
  if (!(cfg.theory_delta >= 0.0 && cfg.theory_delta < 1.0)) throw InvalidInput("config: theory_delta must lie in [0, 1)");
  if (!(cfg.theory_alpha_upper > 0.0 && cfg.theory_alpha_upper < 1.0)) {
    throw InvalidInput("config: theory_alpha_upper must lie in (0, 1)");
  }
}

Matrix gen_design(Index n, Index p, double rho, std::uint64_t seed, std::uint64_t index) {
  if (n < 1 || p < 1) throw InvalidInput("gen_design: n and p must be >= 1");
  const Matrix sigma = toeplitz_cov(p, rho);
  const Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("gen_design: covariance is not positive definite");
  const Matrix l = llt.matrixL();
  RandomStream rng(seed, index, "design");
  Matrix z(p, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) z(j, i) = rng.normal();
  }
  return (l * z).transpose();
}

Vector gen_beta(Index p, const IndexSet& support, double lo, double hi, std::uint64_t seed) {
  check_index_set(support, p, "gen_beta support");
  RandomStream rng(seed, 0, "beta");
  Vector beta = Vector::Zero(p);
  for (Index j : support) beta(j) = rng.uniform(lo, hi);
  return beta;
}

CrossValidationResult cross_validate_lambda(const Matrix& x, const IndexSet& j_set, int folds,
                                            const std::vector<double>& grid, std::uint64_t seed,
                                            const SolverOptions& opts) {
  if (grid.empty()) throw InvalidInput("cross_validate_lambda: grid is empty");
  if (folds < 2) throw InvalidInput("cross_validate_lambda: need at least two folds");
  const Index n = x.rows();
  if (folds > n) throw InvalidInput("cross_validate_lambda: more folds than rows");
  check_index_set(j_set, x.cols(), "cross_validate_lambda J");
  for (double l : grid) {
    if (!(l > 0.0)) throw InvalidInput("cross_validate_lambda: grid values must be > 0");
  }

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  RandomStream rng(seed, 0, "cv-folds");
  for (Index i = n - 1; i > 0; --i) {
    const auto k = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
  }
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = static_cast<int>(i % folds);

  const IndexSet rest = complement(j_set, x.cols());
  const Matrix x_j = select_cols(x, j_set);
  const Matrix x_rest = select_cols(x, rest);

  // descending λ so each fold can warm-start from the sparser neighbour
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  CrossValidationResult res;
  res.grid = grid;
  res.mean_score.assign(grid.size(), 0.0);
  constexpr double inf = std::numeric_limits<double>::infinity();

  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, val;
    for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? val : train).push_back(i);
    const Matrix xr_train = x_rest(train, Eigen::all);
    const Matrix xj_train = x_j(train, Eigen::all);
    const Matrix xr_val = x_rest(val, Eigen::all);
    const Matrix xj_val = x_j(val, Eigen::all);
    std::optional<Matrix> warm;
    for (std::size_t k : order) {
      SolverOptions o = opts;
      o.warm_start = warm;
      try {
        const MultiFit fit = fit_multi_sqrt_lasso(xr_train, xj_train, grid[k], NormSpec::l1(), o);
        res.mean_score[k] += nuclear_norm(xj_val - xr_val * fit.B_hat) / folds;
        warm = fit.B_hat;
      } catch (const NumericalError&) {
        res.mean_score[k] = inf;
        warm.reset();
      }
    }
  }

  std::size_t best = order.front();
  for (std::size_t k : order) {
    // order is descending, so strict improvement keeps the larger λ on ties
    if (res.mean_score[k] < res.mean_score[best]) best = k;
  }
  if (!std::isfinite(res.mean_score[best])) throw NumericalError("cross_validate_lambda: every grid value failed");
  res.lambda = grid[best];
  return res;
}

ExperimentContext prepare_experiment(const ExperimentConfig& cfg, std::optional<double> lambda_msrl_override) {
  validate(cfg);
  ExperimentContext ctx;
  ctx.config = cfg;
  ctx.X = gen_design(cfg.n, cfg.p, cfg.rho, cfg.base_seed);
  ctx.beta0 = gen_beta(cfg.p, cfg.support(), cfg.signal_lo, cfg.signal_hi, cfg.base_seed);

  const auto& srl = cfg.lambda_srl;
  ctx.lambda_srl = srl.kind == SrlLambdaRule::Kind::Explicit
                       ? srl.value
                       : srl.value * theoretical_lambda0(cfg.n, cfg.p, srl.alpha0, srl.alpha_lower, srl.eta);

  if (lambda_msrl_override) {
    ctx.lambda_msrl = *lambda_msrl_override;
  } else {
    switch (cfg.lambda_msrl.kind) {
      case MsrlLambdaRule::Kind::Explicit:
        ctx.lambda_msrl = cfg.lambda_msrl.value;
        break;
      case MsrlLambdaRule::Kind::CrossValidation: {
        const auto grid = cfg.cv_grid.empty() ? default_cv_grid() : cfg.cv_grid;
        ctx.cv = cross_validate_lambda(ctx.X, cfg.J, cfg.cv_folds, grid, cfg.base_seed, cfg.solver);
        ctx.lambda_msrl = ctx.cv->lambda;
        break;
      }
      case MsrlLambdaRule::Kind::Sweep:
        throw InvalidInput("config: a sweep rule needs the lambda-sweep experiment");
    }
  }
  if (!(ctx.lambda_msrl > 0.0)) throw InvalidInput("config: lambda_msrl must be > 0");

  const MultiFit nuisance = fit_nuisance(ctx.X, cfg.J, ctx.lambda_msrl, NormSpec::l1(), cfg.solver);
  const IndexSet rest = complement(cfg.J, cfg.p);
  ctx.nuisance_kkt =
      kkt_check_multi(nuisance, select_cols(ctx.X, rest), select_cols(ctx.X, cfg.J), cfg.solver.kkt_tol)
          .max_dual_violation;
  ctx.Gamma_hat = nuisance.B_hat;
  ctx.surrogates = surrogate_matrices(ctx.X, cfg.J, ctx.Gamma_hat);
  ctx.quantile = chi2_quantile(1.0 - cfg.alpha, static_cast<double>(cfg.J.size()));

  ctx.col_norms.resize(cfg.p);
  for (Index j = 0; j < cfg.p; ++j) ctx.col_norms(j) = norm_n(ctx.X.col(j));
  if (cfg.verify) {
    ctx.bounds = gaussian_bounds(cfg.n, cfg.p, cfg.sigma0, srl.alpha0, srl.alpha_lower, cfg.theory_alpha_upper);
    const double eta = srl.eta;
    const double lambda_under = ctx.lambda_srl * (1.0 - eta) - ctx.bounds.R;
    const IndexSet& s0 = cfg.support();
    if (lambda_under > 0.0 && static_cast<Index>(s0.size()) <= kMaxExactCompatibilitySet) {
      OracleSettings& o = ctx.oracle;
      o.eta = eta;
      o.delta = cfg.theory_delta;
      o.R = ctx.bounds.R;
      o.sigma_lower = ctx.bounds.sigma_lower();
      o.compat.seed = cfg.base_seed;
      const double lambda_bar = ctx.lambda_srl * (1.0 + eta) + o.R + o.delta * lambda_under;
      const double L = lambda_bar / ((1.0 - o.delta) * lambda_under);
      for (const auto& S : oracle_candidate_sets(ctx.beta0, o.extra_candidates)) {
        if (S.empty()) continue;
        o.phi_sq_cache[S] = compatibility_constant(ctx.X, S, L, CompatibilityMode::Exact, o.compat).value;
      }
      ctx.oracle_available = true;
    }
  }
  return ctx;
}

ReplicationRecord run_replication(const ExperimentContext& ctx, int rep) {
  const ExperimentConfig& cfg = ctx.config;
  ReplicationRecord rec;
  rec.rep_index = rep;
  rec.seed_used = stream_key(cfg.base_seed, static_cast<std::uint64_t>(rep), "noise");
  try {
    RandomStream rng(rec.seed_used);
    Vector eps(cfg.n);
    for (Index i = 0; i < cfg.n; ++i) eps(i) = cfg.sigma0 * rng.normal();
    const Vector y = ctx.X * ctx.beta0 + eps;
    rec.eps_norm = norm_n(eps);
    if (rec.eps_norm > 0.0) {
      const Vector corr = (ctx.X.transpose() * eps).cwiseAbs() / (static_cast<double>(cfg.n) * rec.eps_norm);
      rec.r_hat = corr.maxCoeff();
      rec.r_hat_normalized = corr.cwiseQuotient(ctx.col_norms).maxCoeff();
    }

    const SqrtLassoFit fit = fit_sqrt_lasso(ctx.X, y, ctx.lambda_srl, cfg.solver);
    if (fit.degenerate) {
      rec.error = "degenerate square-root Lasso fit";
      return rec;
    }
    rec.sigma_hat = fit.sigma_hat;
    rec.kkt_sqrt = kkt_check_sqrt(fit, ctx.X, y, cfg.solver.kkt_tol).max_dual_violation;
    rec.kkt_nuisance = ctx.nuisance_kkt;

    const Vector normalized = normalized_estimate(fit.beta_hat, ctx.X, y, cfg.J, ctx.surrogates);
    rec.chi2_stat = chi2_statistic_normalized(normalized, select(ctx.beta0, cfg.J), ctx.surrogates.M, fit.sigma_hat);
    rec.covered = rec.chi2_stat <= ctx.quantile;

    const IndexSet rest = complement(cfg.J, cfg.p);
    rec.rem_linf_bound = std::sqrt(static_cast<double>(cfg.n)) * ctx.lambda_msrl *
                         (select(fit.beta_hat, rest) - select(ctx.beta0, rest)).lpNorm<1>() / cfg.sigma0;

    if (cfg.verify) {
      GroupInference inf;
      inf.J = cfg.J;
      inf.Gamma_hat = ctx.Gamma_hat;
      inf.T_tilde = ctx.surrogates.T_tilde;
      inf.T_hat = ctx.surrogates.T_hat;
      inf.M = ctx.surrogates.M;
      inf.W = ctx.surrogates.W;
      inf.T_hat_inv_sqrt = ctx.surrogates.T_hat_inv_sqrt;
      inf.normalized_estimate = normalized;
      inf.lambda = ctx.lambda_msrl;
      try {
        const PivotDecomposition d = theorem1_decomposition(inf, ctx.X, fit.beta_hat, TrueModel{ctx.beta0, cfg.sigma0, eps});
        rec.reconstruction_residual = d.reconstruction_residual;
        rec.rem_linf = d.rem_linf;
      } catch (const ConsistencyError& e) {
        rec.assertion_failed = true;
        rec.error = e.what();
      }
      if (ctx.oracle_available) {
        const OracleReport o = oracle_inequality_check(fit, ctx.X, ctx.beta0, eps, ctx.oracle);
        rec.oracle_applicable = o.applicable;
        rec.oracle_lhs = o.lhs;
        rec.oracle_rhs = o.rhs;
        rec.oracle_holds = o.holds;
        if (o.applicable && !o.holds) {
          rec.assertion_failed = true;
          if (rec.error.empty()) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "oracle inequality violated: lhs " << o.lhs << " > rhs " << o.rhs;
            rec.error = msg.str();
          }
        }
      }
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

std::vector<ReplicationRecord> run_replications_serial(const ExperimentContext& ctx) {
  std::vector<ReplicationRecord> out;
  out.reserve(static_cast<std::size_t>(ctx.config.replications));
  for (int r = 0; r < ctx.config.replications; ++r) out.push_back(run_replication(ctx, r));
  return out;
}

std::vector<ReplicationRecord> run_replications_parallel(const ExperimentContext& ctx, int threads) {
  const int reps = ctx.config.replications;
  std::vector<ReplicationRecord> out(static_cast<std::size_t>(reps));
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(nthreads)
  for (int r = 0; r < reps; ++r) {
    out[static_cast<std::size_t>(r)] = run_replication(ctx, r);
  }
  return out;
}

double ks_distance(std::vector<double> stats, double dof) {
  if (stats.empty()) throw InvalidInput("ks_distance: no statistics");
  std::sort(stats.begin(), stats.end());
  const double m = static_cast<double>(stats.size());
  double d = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const double f = chi2_cdf(stats[i], dof);
    d = std::max({d, (static_cast<double>(i) + 1.0) / m - f, f - static_cast<double>(i) / m});
  }
  return d;
}

int default_thread_count() { return omp_get_max_threads(); }

ExperimentSummary summarize(const std::vector<ReplicationRecord>& records, Index dof, double quantile) {
  ExperimentSummary s;
  s.replications = static_cast<int>(records.size());
  s.quantile = quantile;
  s.histogram.assign(kHistogramBins + 1, 0);
  std::vector<double> stats;
  double total = 0.0;
  int covered = 0;
  for (const auto& r : records) {
    if (r.assertion_failed) ++s.assertion_failures;
    if (!r.error.empty()) {
      ++s.excluded;
      continue;
    }
    stats.push_back(r.chi2_stat);
    total += r.chi2_stat;
    covered += r.covered;
    const auto bin = static_cast<std::size_t>(std::min<double>(std::floor(r.chi2_stat), kHistogramBins));
    ++s.histogram[bin];
  }
  s.used = static_cast<int>(stats.size());
  if (s.used > 0) {
    s.coverage = static_cast<double>(covered) / s.used;
    s.mean_stat = total / s.used;
    s.ks = ks_distance(std::move(stats), static_cast<double>(dof));
  } else {
    s.coverage = s.mean_stat = s.ks = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

namespace {

ExperimentSummary summary_for(const ExperimentContext& ctx, const std::vector<ReplicationRecord>& recs) {
  ExperimentSummary s = summarize(recs, static_cast<Index>(ctx.config.J.size()), ctx.quantile);
  s.lambda_srl = ctx.lambda_srl;
  s.lambda_msrl = ctx.lambda_msrl;
  return s;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads) {
  ExperimentResult res;
  res.context = prepare_experiment(cfg);
  res.records = run_replications_parallel(res.context, threads);
  res.summary = summary_for(res.context, res.records);
  return res;
}

bool VerifyReport::passed() const {
  return theorem1_failures == 0 && oracle_failures == 0 && low_ok && high_ok && union_ok;
}

VerifyReport run_verification(const ExperimentConfig& cfg_in, int threads) {
  ExperimentConfig cfg = cfg_in;
  cfg.verify = true;
  const ExperimentResult res = run_experiment(cfg, threads);
  VerifyReport v;
  v.summary = res.summary;
  v.bounds = res.context.bounds;
  v.oracle_available = res.context.oracle_available;
  int low = 0, high = 0, uni = 0;
  const double s_lo = v.bounds.sigma_lower();
  const double s_hi = v.bounds.sigma_upper();
  for (const auto& r : res.records) {
    ++v.draws;
    const bool is_low = r.eps_norm <= s_lo;
    low += is_low;
    high += r.eps_norm >= s_hi;
    uni += is_low || r.r_hat_normalized >= v.bounds.R;
    // a record that failed before the decomposition ran was not checked
    const bool checked = r.assertion_failed || (r.error.empty());
    if (checked) ++v.theorem1_checked;
    v.max_reconstruction_residual = std::max(v.max_reconstruction_residual, r.reconstruction_residual);
    if (r.oracle_applicable) ++v.oracle_applicable;
    if (r.oracle_applicable && !r.oracle_holds) ++v.oracle_failures;
    if (r.assertion_failed) {
      if (r.error.rfind("oracle", 0) != 0) ++v.theorem1_failures;
      v.failures.push_back({r.rep_index, r.seed_used, r.error});
    }
  }
  auto within = [&](int count, double level) {
    const double m = static_cast<double>(v.draws);
    return count / m <= level + 3.0 * std::sqrt(level * (1.0 - level) / m);
  };
  const double m = static_cast<double>(std::max(v.draws, 1));
  v.freq_low = low / m;
  v.freq_high = high / m;
  v.freq_union = uni / m;
  v.low_ok = within(low, v.bounds.alpha_lower);
  v.high_ok = within(high, v.bounds.alpha_upper);
  v.union_ok = within(uni, v.bounds.alpha0 + v.bounds.alpha_lower);
  return v;
}

std::vector<SweepPoint> run_lambda_sweep(const ExperimentConfig& cfg, const std::vector<double>& lambdas,
                                         int threads) {
  std::vector<SweepPoint> out;
  for (double l : lambdas) {
    SweepPoint pt;
    pt.lambda = l;
    try {
      const ExperimentContext ctx = prepare_experiment(cfg, l);
      pt.summary = summary_for(ctx, run_replications_parallel(ctx, threads));
    } catch (const NumericalError& e) {
      pt.error = e.what();
    }
    out.push_back(std::move(pt));
  }
  return out;
}

std::vector<LevelCell> run_levelplot(const ExperimentConfig& cfg, int threads) {
  if (cfg.levelplot_n.empty() || cfg.levelplot_p.empty()) {
    throw InvalidInput("levelplot: levelplot_n and levelplot_p must be set");
  }
  std::vector<LevelCell> out;
  std::uint64_t cell = 0;
  for (Index n : cfg.levelplot_n) {
    for (Index p : cfg.levelplot_p) {
      ExperimentConfig c = cfg;
      c.n = n;
      c.p = p;
      c.base_seed = stream_key(cfg.base_seed, cell++, "levelplot-cell");
      LevelCell lc;
      lc.n = n;
      lc.p = p;
      try {
        lc.summary = run_experiment(c, threads).summary;
      } catch (const NumericalError& e) {
        lc.error = e.what();
      }
      out.push_back(std::move(lc));
    }
  }
  return out;
}

}  // namespace chi2sets
