#pragma once

#include <optional>
#include <vector>

#include "chi2sets/linalg.hpp"
#include "chi2sets/norms.hpp"

namespace chi2sets {

struct SolverOptions {
  /// Iteration cap (t_stop).
  int max_iter = 50000;
  /// Stop once max|B(t+1) - B(t)| / step < fix_tol, i.e. the proximal
  /// gradient mapping is below fix_tol in the units of XᵀRΣ^{-1/2}/n.
  double fix_tol = 1e-9;
  double kkt_tol = 1e-6;
  /// Relative to the RMS of the response; residual scales below it are degenerate.
  double sigma_floor = 1e-10;
  /// K of the msrL iteration; 0 selects max(1, σ_max(X/√n)).
  double k_scale = 0.0;
  /// Nesterov momentum with restart on objective increase.
  bool accelerate = true;
  std::optional<Matrix> warm_start;
  /// After convergence, refine the KKT equalities on the active pattern by
  /// Newton steps (kept only if they improve the KKT residual).
  bool polish = true;
  bool record_objective = false;
};

struct SqrtLassoFit {
  Vector beta_hat;
  Vector residuals;
  double sigma_hat = 0.0;
  double lambda0 = 0.0;
  int iterations = 0;
  bool converged = false;
  /// σ̂ fell below the floor (interpolation regime).
  bool degenerate = false;
  double k_scale = 1.0;
  std::vector<double> objective_trace;
};

struct MultiFit {
  Matrix B_hat;
  Matrix Sigma_hat;
  double lambda0 = 0.0;
  int iterations = 0;
  bool converged = false;
  double K_scale = 1.0;
  std::vector<double> objective_trace;
};

struct KktReport {
  double max_dual_violation = 0.0;
  Index sign_mismatch_count = 0;
  Index active_set_size = 0;
  double tolerance_used = 0.0;
  /// False when λ = 0; the dual bound is then vacuous and only
  /// `stationarity` (max |gradient|) is meaningful.
  bool dual_applicable = true;
  double stationarity = 0.0;
};

/// ‖y - Xβ‖_n + λ0‖β‖₁
double sqrt_lasso_objective(const Matrix& x, const Vector& y, const Vector& beta, double lambda0);

/// ‖Y - XB‖_nuclear/√n + λ0‖B‖_{1,Ω}
double multi_objective(const Matrix& x, const Matrix& y, const Matrix& b, double lambda0,
                       const NormSpec& norm = NormSpec::l1());

/// Square-root Lasso. A σ̂ below the floor returns a fit flagged degenerate;
/// running out of iterations throws NonConvergence.
SqrtLassoFit fit_sqrt_lasso(const Matrix& x, const Vector& y, double lambda0,
                            const SolverOptions& opts = {});

/// Multivariate square-root Lasso by the msrL fixpoint iteration:
///   B(t+1) = Φ̄(B(t) + h_t·XᵀR(t)Σ(t)^{-1/2}/n; h_t·λ0),  h_t = ω_min(t)/K²,
/// where R(t) = Y - XB(t), Σ(t) = R(t)ᵀR(t)/n and ω_min(t)² is the smallest
/// eigenvalue of Σ(t). For q = 1 this is Φ̄(B + Xᵀr/(nK²); λ0‖r‖_n/K²).
/// Each step minimizes a majorizer of the objective, so the objective never
/// increases; the fixpoints are exactly the KKT points.
/// Throws DegenerateFit when Σ̂ is singular at the floor, NonConvergence on
/// hitting max_iter.
MultiFit fit_multi_sqrt_lasso(const Matrix& x, const Matrix& y, double lambda0,
                              const NormSpec& norm = NormSpec::l1(), const SolverOptions& opts = {});

KktReport kkt_check_sqrt(const SqrtLassoFit& fit, const Matrix& x, const Vector& y, double tol);

KktReport kkt_check_multi(const MultiFit& fit, const Matrix& x, const Matrix& y, double tol,
                          const NormSpec& norm = NormSpec::l1());

/// R = √( log(2p/α0) / (n - 2√(n log(1/α_lower))) ).
double noise_correlation_bound(Index n, Index p, double alpha0, double alpha_lower);

/// 2R/(1-η), the tuning level that makes λ0(1-η) = 2R.
double theoretical_lambda0(Index n, Index p, double alpha0, double alpha_lower, double eta);

/// Smallest λ0 at which β̂ = 0: ‖Xᵀy‖_∞/(n‖y‖_n).
double zero_solution_lambda(const Matrix& x, const Vector& y);

}  // namespace chi2sets
