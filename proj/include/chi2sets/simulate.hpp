#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chi2sets/inference.hpp"
#include "chi2sets/linalg.hpp"
#include "chi2sets/solvers.hpp"
#include "chi2sets/theory.hpp"

namespace chi2sets {

/// How the square-root Lasso level λ_srL is chosen.
struct SrlLambdaRule {
  enum class Kind { TheoryMultiple, Explicit } kind = Kind::TheoryMultiple;
  /// multiplier × theoretical_lambda0(n, p, alpha0, alpha_lower, eta), or the explicit value
  double value = 3.0;
  double alpha0 = 0.05;
  double alpha_lower = 0.05;
  double eta = 1.0 / 3.0;
};

/// How the nuisance level λ_msrL is chosen.
struct MsrlLambdaRule {
  enum class Kind { CrossValidation, Explicit, Sweep } kind = Kind::CrossValidation;
  double value = 0.0;
  std::vector<double> sweep;
};

struct ExperimentConfig {
  Index n = 400;
  Index p = 150;
  IndexSet J{0, 2, 3, 7, 9, 32};
  /// Support of β⁰; empty means "same as J".
  std::optional<IndexSet> S0;
  double signal_lo = 1.0;
  double signal_hi = 4.0;
  double rho = 0.9;
  double sigma0 = 1.0;
  int replications = 200;
  double alpha = 0.05;
  SrlLambdaRule lambda_srl;
  MsrlLambdaRule lambda_msrl;
  int cv_folds = 5;
  std::vector<double> cv_grid;  // empty → default_cv_grid()
  std::uint64_t base_seed = 0;
  bool has_seed = false;
  /// Run the pivot-identity assertions inside every replication.
  bool verify = false;
  /// Upper-tail level ᾱ and δ for the verify checks.
  double theory_alpha_upper = 0.05;
  double theory_delta = 1.0 / 7.0;
  std::vector<Index> levelplot_n;
  std::vector<Index> levelplot_p;
  SolverOptions solver;

  const IndexSet& support() const { return S0 ? *S0 : J; }
};

/// 30 log-spaced points on [0.01, 3].
std::vector<double> default_cv_grid();

/// Throws InvalidInput on any violated invariant.
void validate(const ExperimentConfig& cfg);

/// Rows i.i.d. N(0, toeplitz_cov(p, rho)) via the Cholesky factor, from the
/// stream (seed, index, "design").
Matrix gen_design(Index n, Index p, double rho, std::uint64_t seed, std::uint64_t index = 0);

/// Uniform(lo, hi) on the support, zero elsewhere; stream (seed, 0, "beta").
Vector gen_beta(Index p, const IndexSet& support, double lo, double hi, std::uint64_t seed);

struct CrossValidationResult {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_score;  // +∞ where some fold fit failed
};

/// K-fold choice of the nuisance level by held-out nuclear-norm error.
/// Ties go to the larger λ.
CrossValidationResult cross_validate_lambda(const Matrix& x, const IndexSet& j_set, int folds,
                                            const std::vector<double>& grid, std::uint64_t seed,
                                            const SolverOptions& opts = {});

struct ReplicationRecord {
  int rep_index = 0;
  double chi2_stat = 0.0;
  bool covered = false;
  double sigma_hat = 0.0;
  double rem_linf_bound = 0.0;
  double kkt_sqrt = 0.0;
  double kkt_nuisance = 0.0;
  std::uint64_t seed_used = 0;
  // verify mode only
  double reconstruction_residual = 0.0;
  double rem_linf = 0.0;
  double eps_norm = 0.0;
  /// ‖Xᵀε‖_∞/(n‖ε‖_n) on the design as is, and with columns scaled to ‖X_j‖_n = 1
  double r_hat = 0.0;
  double r_hat_normalized = 0.0;
  bool oracle_applicable = false;
  bool oracle_holds = true;
  double oracle_lhs = 0.0;
  double oracle_rhs = 0.0;
  /// Empty on success; otherwise the failure and the record is excluded.
  std::string error;
  bool assertion_failed = false;
};

inline constexpr int kHistogramBins = 40;

struct ExperimentSummary {
  int replications = 0;
  int used = 0;
  int excluded = 0;
  int assertion_failures = 0;
  double coverage = 0.0;
  double mean_stat = 0.0;
  double ks = 0.0;
  double quantile = 0.0;
  double lambda_srl = 0.0;
  double lambda_msrl = 0.0;
  /// Unit-width bins on [0, 40) plus an overflow bin for [40, ∞).
  std::vector<long> histogram;
};

/// Fixed-design state shared by every replication.
struct ExperimentContext {
  ExperimentConfig config;
  Matrix X;
  Vector beta0;
  double lambda_srl = 0.0;
  double lambda_msrl = 0.0;
  Matrix Gamma_hat;
  Surrogates surrogates;
  double nuisance_kkt = 0.0;
  double quantile = 0.0;
  std::optional<CrossValidationResult> cv;
  // verify mode
  GaussianBounds bounds;
  Vector col_norms;
  bool oracle_available = false;
  OracleSettings oracle;
};

/// Builds the design, β⁰, λ levels and the nuisance fit. When
/// lambda_msrl_override is set it replaces the configured nuisance rule.
ExperimentContext prepare_experiment(const ExperimentConfig& cfg,
                                     std::optional<double> lambda_msrl_override = std::nullopt);

/// One replication: fresh noise from (base_seed, rep, "noise"). Never throws;
/// failures are reported through the record.
ReplicationRecord run_replication(const ExperimentContext& ctx, int rep);

/// Reference implementation: plain loop over replications.
std::vector<ReplicationRecord> run_replications_serial(const ExperimentContext& ctx);

/// OpenMP loop; threads <= 0 uses the runtime default. Each replication owns
/// its stream and its record slot, so the result equals the serial one.
std::vector<ReplicationRecord> run_replications_parallel(const ExperimentContext& ctx, int threads);

/// Thread count used when `threads` <= 0 is passed to the runners.
int default_thread_count();

ExperimentSummary summarize(const std::vector<ReplicationRecord>& records, Index dof, double quantile);

struct ExperimentResult {
  ExperimentContext context;
  std::vector<ReplicationRecord> records;
  ExperimentSummary summary;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 0);

/// sup_x |F_emp(x) - F_{χ²_dof}(x)|.
double ks_distance(std::vector<double> stats, double dof);

struct FailingReplication {
  int rep_index = 0;
  std::uint64_t seed_used = 0;
  std::string what;
};

/// Pass/fail counts of the verify-mode checks.
struct VerifyReport {
  ExperimentSummary summary;
  // exact pivot identity and remainder bound
  int theorem1_checked = 0;
  int theorem1_failures = 0;
  double max_reconstruction_residual = 0.0;
  // sharp oracle inequality, asserted only on draws where its conditions hold
  bool oracle_available = false;
  int oracle_applicable = 0;
  int oracle_failures = 0;
  // Gaussian tail levels: frequency vs level + 3 binomial standard errors
  GaussianBounds bounds;
  int draws = 0;
  double freq_low = 0.0;
  double freq_high = 0.0;
  double freq_union = 0.0;
  bool low_ok = true;
  bool high_ok = true;
  bool union_ok = true;
  std::vector<FailingReplication> failures;

  bool passed() const;
};

/// Runs the replications with every check switched on.
VerifyReport run_verification(const ExperimentConfig& cfg, int threads = 0);

struct SweepPoint {
  double lambda = 0.0;
  ExperimentSummary summary;
  /// Set when the nuisance fit at this λ failed; summary is then empty.
  std::string error;
};

/// Coverage against fixed nuisance levels on one design.
std::vector<SweepPoint> run_lambda_sweep(const ExperimentConfig& cfg, const std::vector<double>& lambdas,
                                         int threads = 0);

struct LevelCell {
  Index n = 0;
  Index p = 0;
  ExperimentSummary summary;
  /// Set when the cell could not be run (e.g. the nuisance fit failed).
  std::string error;
};

/// One fresh design per (n, p) cell.
std::vector<LevelCell> run_levelplot(const ExperimentConfig& cfg, int threads = 0);

}  // namespace chi2sets
