#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "chi2sets/linalg.hpp"
#include "chi2sets/solvers.hpp"

namespace chi2sets {

/// Gaussian-noise levels: P(‖ε‖_n ≤ σ̲) ≤ α̲, P(‖ε‖_n ≥ σ̄) ≤ ᾱ and
/// P(R̂ ≥ R or ‖ε‖_n ≤ σ̲) ≤ α0 + α̲ for normalized columns.
struct GaussianBounds {
  double sigma_lower_sq = 0.0;
  double sigma_upper_sq = 0.0;
  double R = 0.0;
  double alpha0 = 0.0;
  double alpha_lower = 0.0;
  double alpha_upper = 0.0;

  double sigma_lower() const;
  double sigma_upper() const;
};

GaussianBounds gaussian_bounds(Index n, Index p, double sigma0, double alpha0, double alpha_lower,
                               double alpha_upper);

/// R̂ = ‖Xᵀε‖_∞/(n‖ε‖_n).
double empirical_R_hat(const Matrix& x, const Vector& eps);

/// λ0‖β⁰‖₁/σ̲ ≤ 2(√(1+(η/2)²) - 1).
bool l1_sparsity_check(const Vector& beta0, double lambda0, double sigma_lower, double eta);
/// Right-hand side of the ℓ1-sparsity condition.
double l1_sparsity_level(double eta);

/// |σ̂/‖ε‖_n - 1| ≤ η.
bool sigma_consistency_check(const SqrtLassoFit& fit, const Vector& eps, double eta);

enum class CompatibilityMode { Exact, LowerHeuristic };

struct CompatibilityResult {
  /// Attained by a feasible point, so never below the true minimum.
  double value = 0.0;
  /// min over patterns of (value - Frank–Wolfe gap): never above the true
  /// minimum in exact mode.
  double lower_bound = 0.0;
  /// False for the heuristic mode: the value is then only an upper bound on
  /// the minimum (a subset of sign patterns was searched).
  bool exact = true;
  std::int64_t patterns = 0;
  /// Largest Frank–Wolfe gap among the certified subproblem solutions.
  double max_gap = 0.0;
  Vector argmin;
};

struct CompatibilityOptions {
  int restarts = 32;
  double tol = 1e-8;
  int max_iter = 200000;
  /// Sign patterns sampled in heuristic mode.
  int heuristic_patterns = 256;
  std::uint64_t seed = 0;
};

inline constexpr Index kMaxExactCompatibilitySet = 12;

/// φ̂²(L,S) = min{ |S|‖Xβ‖_n² : ‖β_S‖₁ = 1, ‖β_{-S}‖₁ ≤ L }.
/// Exact mode enumerates the sign patterns of β_S (up to a global sign) and
/// solves each convex QP over simplex × ℓ1-ball by projected gradient.
CompatibilityResult compatibility_constant(const Matrix& x, const IndexSet& S, double L,
                                           CompatibilityMode mode = CompatibilityMode::Exact,
                                           const CompatibilityOptions& opts = {});

struct OracleCandidate {
  IndexSet S;
  /// 2δλ̲‖β - β⁰‖₁‖ε‖_n + ‖X(β - β⁰)‖_n² at β = β⁰ restricted to S.
  double approximation = 0.0;
  double phi_sq = 0.0;
  /// λ̄²|S|‖ε‖_n²/φ̂²(L,S); zero for S = ∅.
  double estimation = 0.0;
  double rhs = 0.0;
};

struct OracleReport {
  /// False when the event {R̂ ≤ R, ‖ε‖_n ≥ σ̲} or the ℓ1-sparsity condition
  /// fails, or λ0(1-η) ≤ R; no assertion is made then.
  bool applicable = false;
  bool event_holds = false;
  bool sparsity_holds = false;
  double R_hat = 0.0;
  double eps_norm = 0.0;
  double lambda_under = 0.0;
  double lambda_bar = 0.0;
  double L = 0.0;
  double lhs = 0.0;
  std::vector<OracleCandidate> candidates;
  /// min over candidates of rhs
  double rhs = 0.0;
  bool holds = true;
};

struct OracleSettings {
  double eta = 1.0 / 3.0;
  double delta = 1.0 / 7.0;
  double R = 0.0;
  double sigma_lower = 0.0;
  /// Also evaluate S = ∅ and the singletons of S₀ (S₀ itself is always used).
  bool extra_candidates = true;
  CompatibilityOptions compat;
  /// Precomputed φ̂²(L,S) by S, for repeated checks on one design and L.
  std::map<IndexSet, double> phi_sq_cache;
};

/// The candidate sets oracle_inequality_check evaluates for this β⁰.
std::vector<IndexSet> oracle_candidate_sets(const Vector& beta0, bool extra_candidates);

/// Evaluates both sides of the sharp oracle inequality for the square-root
/// Lasso at explicit candidate sets.
OracleReport oracle_inequality_check(const SqrtLassoFit& fit, const Matrix& x, const Vector& beta0,
                                     const Vector& eps, const OracleSettings& settings);

struct SparsityReport {
  double l1_norm_beta0 = 0.0;
  Index s0 = 0;
  IndexSet S0;
  /// Λ̂_max(S₀): square root of the largest eigenvalue of X_{S₀}ᵀX_{S₀}/n.
  double Lambda_max_S0 = 0.0;
  double rho_r = 0.0;
  double r_exponent = 0.0;
  /// {j : |β⁰_j| > 3Rσ̲/Λ̂_max(S₀)}
  IndexSet S_star;
  /// {j : |β⁰_j| > λ̄‖ε‖_n/Λ̂_max(S₀)}
  IndexSet S_hat_star;
  double eta = 0.0;
  double delta = 1.0 / 7.0;
  double lambda_under = 0.0;
  double lambda_bar = 0.0;
  double L = 0.0;
  double phi_sq_S_star = 1.0;
  double phi_sq_S0 = 1.0;
  /// (6R)^{1-r}(1 + 6²Λ̂_max^r/φ̂²(6,S_*))(ρ_r/σ̲)^r
  double lr_bound = 0.0;
  /// 3R·6²s₀/φ̂²(6,S₀)
  double l0_bound = 0.0;
};

/// Weak and strong sparsity bounds on ‖β̂ - β⁰‖₁/‖ε‖_n for the tuning
/// λ0(1-η) = 2R, δ = 1/7 (so L ≤ 6). An empty S_* or S₀ takes φ̂² = 1.
/// rho_r ≤ 0 uses (Σ|β⁰_j|^r)^{1/r}.
SparsityReport weak_sparsity_bounds(const Vector& beta0, double eps_norm, double R, double sigma_lower,
                                    double eta, const Matrix& x, double r_exponent, double rho_r = 0.0,
                                    const CompatibilityOptions& compat = {});

}  // namespace chi2sets
