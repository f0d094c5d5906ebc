#include "chi2sets/linalg.hpp"

#include <cmath>
#include <sstream>

#include "chi2sets/error.hpp"

namespace chi2sets {

double norm_n(const Vector& v) {
  if (v.size() == 0) throw InvalidInput("norm_n: empty vector");
  return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

double asymmetry(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInput("asymmetry: matrix is not square");
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

Vector singular_values(const Matrix& a) {
  if (a.size() == 0) throw InvalidInput("singular_values: empty matrix");
  if (!a.allFinite()) throw InvalidInput("singular_values: non-finite entry");
  // Symmetric eigen-decomposition of the smaller Gram matrix would square the
  // condition number; Jacobi SVD stays accurate for tiny singular values.
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues();
}

double nuclear_norm(const Matrix& a) {
  if (!a.allFinite()) throw InvalidInput("nuclear_norm: non-finite entry");
  return singular_values(a).sum();
}

double max_eigenvalue(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> symmetric_eigen(const Matrix& s, const char* who) {
  if (s.rows() != s.cols() || s.size() == 0) {
    throw InvalidInput(std::string(who) + ": matrix must be square and non-empty");
  }
  if (!s.allFinite()) throw InvalidInput(std::string(who) + ": non-finite entry");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (asymmetry(s) > 1e-8 * scale) {
    throw InvalidInput(std::string(who) + ": matrix is not symmetric");
  }
  // symmetrize so tiny asymmetries from accumulated rounding do not leak in
  const Matrix sym = 0.5 * (s + s.transpose());
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym);
}

}  // namespace

Matrix psd_inv_sqrt(const Matrix& s, double rcond) {
  auto es = symmetric_eigen(s, "psd_inv_sqrt");
  const Vector& ev = es.eigenvalues();
  const double hi = ev.maxCoeff();
  const double lo = ev.minCoeff();
  if (!(hi > 0.0) || lo < rcond * hi) {
    std::ostringstream msg;
    const double cond = hi > 0.0 ? lo / hi : 0.0;
    msg << "psd_inv_sqrt: matrix is singular at rcond " << rcond << " (lambda_min/lambda_max = "
        << cond << ")";
    throw SingularMatrix(msg.str(), cond);
  }
  const Vector d = ev.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Matrix psd_sqrt(const Matrix& s) {
  auto es = symmetric_eigen(s, "psd_sqrt");
  const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Matrix toeplitz_cov(Index p, double rho) {
  if (p < 1) throw InvalidInput("toeplitz_cov: p must be >= 1");
  if (!(std::abs(rho) < 1.0)) throw InvalidInput("toeplitz_cov: |rho| must be < 1");
  Matrix sigma(p, p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) {
      sigma(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    }
  }
  return sigma;
}

void check_index_set(const IndexSet& idx, Index p, const char* what) {
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= p) {
      throw InvalidInput(std::string(what) + ": index out of range");
    }
    if (k > 0 && idx[k] <= idx[k - 1]) {
      throw InvalidInput(std::string(what) + ": indices must be strictly increasing");
    }
  }
}

Matrix select_cols(const Matrix& x, const IndexSet& idx) {
  Matrix out(x.rows(), static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = x.col(idx[k]);
  return out;
}

Vector select(const Vector& v, const IndexSet& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = v(idx[k]);
  return out;
}

IndexSet complement(const IndexSet& idx, Index p) {
  IndexSet out;
  out.reserve(static_cast<std::size_t>(p) - idx.size());
  std::size_t k = 0;
  for (Index j = 0; j < p; ++j) {
    if (k < idx.size() && idx[k] == j) {
      ++k;
    } else {
      out.push_back(j);
    }
  }
  return out;
}

}  // namespace chi2sets
