#pragma once

#include <optional>

#include "chi2sets/linalg.hpp"
#include "chi2sets/norms.hpp"
#include "chi2sets/solvers.hpp"

namespace chi2sets {

/// Quantities only a simulation knows. Kept out of every estimation entry
/// point so the truth cannot leak into an estimator.
struct TrueModel {
  Vector beta0;
  double sigma0 = 1.0;
  Vector eps;
};

/// T̃_J = WᵀX_J/n, T̂_J = WᵀW/n and M = √n T̂_J^{-1/2} T̃_J with W = X_J - X_{-J}Γ̂_J.
struct Surrogates {
  Matrix W;
  Matrix T_tilde;
  Matrix T_hat;
  Matrix T_hat_inv_sqrt;
  Matrix M;
};

struct GroupInference {
  IndexSet J;
  Matrix Gamma_hat;
  Matrix T_tilde;
  Matrix T_hat;
  Matrix M;
  /// Empty when T̃_J is singular; the normalized estimate is always available.
  std::optional<Vector> b_hat_J;
  /// M b̂_J, computed without inverting T̃_J.
  Vector normalized_estimate;
  double lambda = 0.0;
  NormSpec norm;
  Matrix W;
  Matrix T_hat_inv_sqrt;
};

/// Γ̂_J: multivariate square-root Lasso of X_J on X_{-J}. The fit must pass
/// its KKT check at opts.kkt_tol.
MultiFit fit_nuisance(const Matrix& x, const IndexSet& j_set, double lambda,
                      const NormSpec& norm = NormSpec::l1(), const SolverOptions& opts = {});

/// Throws SingularMatrix when T̂_J is singular at the default rcond.
Surrogates surrogate_matrices(const Matrix& x, const IndexSet& j_set, const Matrix& gamma_hat);

/// b̂_J = β̂_J + T̃_J^{-1} Wᵀ(y - Xβ̂)/n. Throws SingularMatrix when T̃_J is
/// singular; use normalized_estimate in that case.
Vector desparsify(const Vector& beta_hat, const Matrix& x, const Vector& y, const IndexSet& j_set,
                  const Matrix& gamma_hat, const Matrix& t_tilde);

/// M b̂_J = M β̂_J + √n T̂_J^{-1/2} Wᵀ(y - Xβ̂)/n.
Vector normalized_estimate(const Vector& beta_hat, const Matrix& x, const Vector& y, const IndexSet& j_set,
                           const Surrogates& s);

/// Assembles everything downstream of an initial estimate β̂ and a nuisance fit Γ̂_J.
GroupInference build_group_inference(const Matrix& x, const Vector& y, const Vector& beta_hat,
                                     const IndexSet& j_set, const Matrix& gamma_hat, double lambda,
                                     const NormSpec& norm = NormSpec::l1());

struct PivotDecomposition {
  Vector gauss_term;  // T̂_J^{-1/2} Wᵀε/√n
  Vector rem;         // -√n λ Ẑ_Jᵀ(β̂_{-J} - β⁰_{-J})/σ₀
  Matrix Z_hat;       // X_{-J}ᵀ W T̂_J^{-1/2}/(nλ)
  double dual_norm_Z = 0.0;
  double reconstruction_residual = 0.0;
  double rem_linf = 0.0;
  /// √n λ Ω(β̂_{-J} - β⁰_{-J})/σ₀; Ω = ℓ1 unless a group norm was used.
  double rem_bound = 0.0;
};

inline constexpr double kReconstructionTol = 1e-8;
inline constexpr double kRemainderSlack = 1e-10;

/// Exact split M(b̂_J - β⁰_J)/σ₀ = gauss_term/σ₀ + rem. Throws ConsistencyError
/// when the reconstruction residual exceeds 1e-8 or ‖rem‖_∞ exceeds its bound
/// by more than 1e-10.
PivotDecomposition theorem1_decomposition(const GroupInference& inf, const Matrix& x, const Vector& beta_hat,
                                          const TrueModel& truth);

/// ‖M(b̂_J - β_ref)‖₂² / σ².
double chi2_statistic(const Vector& b_hat_j, const Vector& beta_ref, const Matrix& m, double sigma);

/// Same statistic from the normalized estimate M b̂_J.
double chi2_statistic_normalized(const Vector& normalized, const Vector& beta_ref, const Matrix& m, double sigma);

/// {b : ‖M b̂_J - M b‖₂² ≤ σ² q_{1-α}}, q the χ²_{|J|} quantile.
struct EllipsoidSet {
  Vector normalized_center;
  std::optional<Vector> center;
  Matrix M;
  double sigma = 1.0;
  double alpha = 0.05;
  double quantile = 0.0;
  double radius_sq = 0.0;
  /// Semi-axis lengths σ√q / s_i(M), with directions as columns.
  Vector semi_axes;
  Matrix axis_directions;

  double statistic(const Vector& b) const;
  bool contains(const Vector& b) const { return statistic(b) <= quantile; }
};

/// Throws SingularMatrix when M has a zero singular value (unbounded set).
EllipsoidSet confidence_set(const GroupInference& inf, double sigma, double alpha);

}  // namespace chi2sets
