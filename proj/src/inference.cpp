#include "chi2sets/inference.hpp"

#include <cmath>
#include <sstream>

#include "chi2sets/error.hpp"
#include "chi2sets/special.hpp"

namespace chi2sets {

namespace {

void check_group(const Matrix& x, const IndexSet& j_set) {
  if (j_set.empty()) throw InvalidInput("group J must be non-empty");
  check_index_set(j_set, x.cols(), "group J");
  if (static_cast<Index>(j_set.size()) >= x.cols()) throw InvalidInput("group J must leave at least one column");
}

}  // namespace

MultiFit fit_nuisance(const Matrix& x, const IndexSet& j_set, double lambda, const NormSpec& norm,
                      const SolverOptions& opts) {
  check_group(x, j_set);
  if (!(lambda > 0.0)) throw InvalidInput("fit_nuisance: lambda must be > 0");
  const IndexSet rest = complement(j_set, x.cols());
  const Matrix x_rest = select_cols(x, rest);
  const Matrix x_j = select_cols(x, j_set);
  const NormSpec local = norm.restricted_to(rest);
  MultiFit fit = fit_multi_sqrt_lasso(x_rest, x_j, lambda, local, opts);
  const KktReport kkt = kkt_check_multi(fit, x_rest, x_j, opts.kkt_tol, local);
  if (kkt.max_dual_violation > opts.kkt_tol || kkt.sign_mismatch_count > 0) {
    std::ostringstream msg;
    msg << "fit_nuisance: KKT check failed (dual violation " << kkt.max_dual_violation << ", "
        << kkt.sign_mismatch_count << " sign mismatches)";
    throw NumericalError(msg.str());
  }
  return fit;
}

Surrogates surrogate_matrices(const Matrix& x, const IndexSet& j_set, const Matrix& gamma_hat) {
  check_group(x, j_set);
  const IndexSet rest = complement(j_set, x.cols());
  if (gamma_hat.rows() != static_cast<Index>(rest.size()) || gamma_hat.cols() != static_cast<Index>(j_set.size())) {
    throw InvalidInput("surrogate_matrices: Gamma_hat has the wrong shape");
  }
  const double n = static_cast<double>(x.rows());
  const Matrix x_j = select_cols(x, j_set);
  Surrogates s;
  s.W = x_j - select_cols(x, rest) * gamma_hat;
  s.T_tilde = s.W.transpose() * x_j / n;
  s.T_hat = s.W.transpose() * s.W / n;
  s.T_hat_inv_sqrt = psd_inv_sqrt(s.T_hat);
  s.M = std::sqrt(n) * s.T_hat_inv_sqrt * s.T_tilde;
  return s;
}

Vector desparsify(const Vector& beta_hat, const Matrix& x, const Vector& y, const IndexSet& j_set,
                  const Matrix& gamma_hat, const Matrix& t_tilde) {
  check_group(x, j_set);
  if (beta_hat.size() != x.cols() || y.size() != x.rows()) throw InvalidInput("desparsify: shape mismatch");
  const IndexSet rest = complement(j_set, x.cols());
  const double n = static_cast<double>(x.rows());
  Eigen::JacobiSVD<Matrix> svd(t_tilde);
  const Vector sv = svd.singularValues();
  const double cond = sv.maxCoeff() > 0.0 ? sv.minCoeff() / sv.maxCoeff() : 0.0;
  if (!(cond > kDefaultRcond)) {
    throw SingularMatrix("desparsify: T_tilde is singular; use the normalized estimate M*b_hat instead", cond);
  }
  const Matrix w = select_cols(x, j_set) - select_cols(x, rest) * gamma_hat;
  const Vector correction = t_tilde.partialPivLu().solve(w.transpose() * (y - x * beta_hat) / n);
  return select(beta_hat, j_set) + correction;
}

Vector normalized_estimate(const Vector& beta_hat, const Matrix& x, const Vector& y, const IndexSet& j_set,
                           const Surrogates& s) {
  const double n = static_cast<double>(x.rows());
  return s.M * select(beta_hat, j_set) +
         std::sqrt(n) * s.T_hat_inv_sqrt * (s.W.transpose() * (y - x * beta_hat) / n);
}

GroupInference build_group_inference(const Matrix& x, const Vector& y, const Vector& beta_hat,
                                     const IndexSet& j_set, const Matrix& gamma_hat, double lambda,
                                     const NormSpec& norm) {
  Surrogates s = surrogate_matrices(x, j_set, gamma_hat);
  GroupInference inf;
  inf.J = j_set;
  inf.Gamma_hat = gamma_hat;
  inf.lambda = lambda;
  inf.norm = norm;
  inf.normalized_estimate = normalized_estimate(beta_hat, x, y, j_set, s);
  try {
    inf.b_hat_J = desparsify(beta_hat, x, y, j_set, gamma_hat, s.T_tilde);
  } catch (const SingularMatrix&) {
    inf.b_hat_J.reset();
  }
  inf.T_tilde = std::move(s.T_tilde);
  inf.T_hat = std::move(s.T_hat);
  inf.M = std::move(s.M);
  inf.W = std::move(s.W);
  inf.T_hat_inv_sqrt = std::move(s.T_hat_inv_sqrt);
  return inf;
}

PivotDecomposition theorem1_decomposition(const GroupInference& inf, const Matrix& x, const Vector& beta_hat,
                                          const TrueModel& truth) {
  if (!(truth.sigma0 > 0.0)) throw InvalidInput("theorem1_decomposition: sigma0 must be > 0");
  if (truth.beta0.size() != x.cols() || truth.eps.size() != x.rows()) {
    throw InvalidInput("theorem1_decomposition: shape mismatch");
  }
  if (!(inf.lambda > 0.0)) throw InvalidInput("theorem1_decomposition: lambda must be > 0");
  const double n = static_cast<double>(x.rows());
  const double rn = std::sqrt(n);
  const IndexSet rest = complement(inf.J, x.cols());
  const Matrix x_rest = select_cols(x, rest);

  PivotDecomposition d;
  d.gauss_term = inf.T_hat_inv_sqrt * (inf.W.transpose() * truth.eps) / rn;
  // Ẑ_J as defined by the KKT equation of the nuisance fit
  d.Z_hat = x_rest.transpose() * inf.W * inf.T_hat_inv_sqrt / (n * inf.lambda);
  const Vector err_rest = select(beta_hat, rest) - select(truth.beta0, rest);
  d.rem = -rn * inf.lambda * d.Z_hat.transpose() * err_rest / truth.sigma0;

  const Vector lhs = (inf.normalized_estimate - inf.M * select(truth.beta0, inf.J)) / truth.sigma0;
  d.reconstruction_residual = (lhs - d.gauss_term / truth.sigma0 - d.rem).cwiseAbs().maxCoeff();
  d.rem_linf = d.rem.cwiseAbs().maxCoeff();

  const NormSpec local = inf.norm.restricted_to(rest);
  const Penalty pen(local, static_cast<Index>(rest.size()));
  d.dual_norm_Z = pen.dual(d.Z_hat);
  d.rem_bound = rn * inf.lambda * pen.value(err_rest) / truth.sigma0;

  if (!(d.reconstruction_residual <= kReconstructionTol)) {
    std::ostringstream msg;
    msg << "theorem1_decomposition: reconstruction residual " << d.reconstruction_residual << " exceeds "
        << kReconstructionTol;
    throw ConsistencyError(msg.str());
  }
  if (!(d.rem_linf <= d.rem_bound + kRemainderSlack)) {
    std::ostringstream msg;
    msg << "theorem1_decomposition: |rem|_inf = " << d.rem_linf << " exceeds bound " << d.rem_bound
        << " (dual norm of Z_hat " << d.dual_norm_Z << ")";
    throw ConsistencyError(msg.str());
  }
  return d;
}

double chi2_statistic_normalized(const Vector& normalized, const Vector& beta_ref, const Matrix& m, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("chi2_statistic: sigma must be > 0");
  if (m.cols() != beta_ref.size() || m.rows() != normalized.size()) {
    throw InvalidInput("chi2_statistic: shape mismatch");
  }
  return (normalized - m * beta_ref).squaredNorm() / (sigma * sigma);
}

double chi2_statistic(const Vector& b_hat_j, const Vector& beta_ref, const Matrix& m, double sigma) {
  if (b_hat_j.size() != beta_ref.size()) throw InvalidInput("chi2_statistic: shape mismatch");
  if (!(sigma > 0.0)) throw InvalidInput("chi2_statistic: sigma must be > 0");
  return (m * (b_hat_j - beta_ref)).squaredNorm() / (sigma * sigma);
}

double EllipsoidSet::statistic(const Vector& b) const {
  return chi2_statistic_normalized(normalized_center, b, M, sigma);
}

EllipsoidSet confidence_set(const GroupInference& inf, double sigma, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("confidence_set: alpha must lie in (0, 1)");
  if (!(sigma > 0.0)) throw InvalidInput("confidence_set: sigma must be > 0");
  Eigen::JacobiSVD<Matrix> svd(inf.M, Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  if (!(sv.minCoeff() > kDefaultRcond * sv.maxCoeff())) {
    throw SingularMatrix("confidence_set: M has a zero singular value; the set is unbounded",
                         sv.maxCoeff() > 0.0 ? sv.minCoeff() / sv.maxCoeff() : 0.0);
  }
  EllipsoidSet set;
  set.normalized_center = inf.normalized_estimate;
  set.center = inf.b_hat_J;
  set.M = inf.M;
  set.sigma = sigma;
  set.alpha = alpha;
  set.quantile = chi2_quantile(1.0 - alpha, static_cast<double>(inf.J.size()));
  set.radius_sq = sigma * sigma * set.quantile;
  set.semi_axes = (sigma * std::sqrt(set.quantile)) * sv.cwiseInverse();
  set.axis_directions = svd.matrixV();
  return set;
}

}  // namespace chi2sets
