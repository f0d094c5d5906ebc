#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace chi2sets {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Sorted, 0-based coordinate set.
using IndexSet = std::vector<Index>;

inline constexpr double kDefaultRcond = 1e-10;

/// ‖v‖_n = sqrt(vᵀv / n).
double norm_n(const Vector& v);

/// Sum of singular values. Throws InvalidInput on non-finite entries.
double nuclear_norm(const Matrix& a);

/// Singular values in descending order.
Vector singular_values(const Matrix& a);

/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue(const Matrix& s);

/// S^{-1/2} of a symmetric PSD matrix via eigen-decomposition.
/// Throws SingularMatrix when λ_min < rcond·λ_max.
Matrix psd_inv_sqrt(const Matrix& s, double rcond = kDefaultRcond);

/// S^{1/2}; negative eigenvalues from rounding are clipped to zero.
Matrix psd_sqrt(const Matrix& s);

/// Σ_{ij} = rho^{|i-j|}. Requires |rho| < 1.
Matrix toeplitz_cov(Index p, double rho);

/// Columns listed in idx, in order.
Matrix select_cols(const Matrix& x, const IndexSet& idx);
Vector select(const Vector& v, const IndexSet& idx);

/// {0..p-1} minus idx (idx must be sorted and in range).
IndexSet complement(const IndexSet& idx, Index p);

/// Throws InvalidInput unless idx is strictly increasing and inside [0, p).
void check_index_set(const IndexSet& idx, Index p, const char* what);

bool all_finite(const Matrix& a);

/// Largest |a_ij - a_ji|.
double asymmetry(const Matrix& a);

}  // namespace chi2sets
