#include "chi2sets/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "chi2sets/error.hpp"
#include "chi2sets/rng.hpp"

namespace chi2sets {

double GaussianBounds::sigma_lower() const { return std::sqrt(sigma_lower_sq); }
double GaussianBounds::sigma_upper() const { return std::sqrt(sigma_upper_sq); }

GaussianBounds gaussian_bounds(Index n, Index p, double sigma0, double alpha0, double alpha_lower,
                               double alpha_upper) {
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw InvalidInput("gaussian_bounds: sigma0 must be positive");
  if (!(alpha_upper > 0.0)) throw InvalidInput("gaussian_bounds: error levels must be positive");
  if (!(alpha0 + alpha_lower + alpha_upper < 1.0)) {
    throw InvalidInput("gaussian_bounds: need alpha0 + alpha_lower + alpha_upper < 1");
  }
  GaussianBounds g;
  g.alpha0 = alpha0;
  g.alpha_lower = alpha_lower;
  g.alpha_upper = alpha_upper;
  g.R = noise_correlation_bound(n, p, alpha0, alpha_lower);  // validates the rest
  const double nn = static_cast<double>(n);
  const double s2 = sigma0 * sigma0;
  g.sigma_lower_sq = s2 * (1.0 - 2.0 * std::sqrt(std::log(1.0 / alpha_lower) / nn));
  const double tu = std::log(1.0 / alpha_upper);
  g.sigma_upper_sq = s2 * (1.0 + 2.0 * std::sqrt(tu / nn) + 2.0 * tu / nn);
  return g;
}

double empirical_R_hat(const Matrix& x, const Vector& eps) {
  if (x.rows() != eps.size()) throw InvalidInput("empirical_R_hat: X and eps row counts differ");
  const double en = norm_n(eps);
  if (!(en > 0.0)) throw InvalidInput("empirical_R_hat: eps must be nonzero");
  return (x.transpose() * eps).cwiseAbs().maxCoeff() / (static_cast<double>(x.rows()) * en);
}

double l1_sparsity_level(double eta) { return 2.0 * (std::sqrt(1.0 + 0.25 * eta * eta) - 1.0); }

bool l1_sparsity_check(const Vector& beta0, double lambda0, double sigma_lower, double eta) {
  if (!(sigma_lower > 0.0)) return false;
  return lambda0 * beta0.lpNorm<1>() / sigma_lower <= l1_sparsity_level(eta);
}

bool sigma_consistency_check(const SqrtLassoFit& fit, const Vector& eps, double eta) {
  const double en = norm_n(eps);
  if (!(en > 0.0)) return false;
  return std::abs(fit.sigma_hat / en - 1.0) <= eta;
}

namespace {

// Euclidean projection onto {u ≥ 0, Σu = radius}.
void project_simplex(Vector& u, double radius) {
  const Index k = u.size();
  if (k == 0) return;
  std::vector<double> sorted(u.data(), u.data() + k);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (Index i = 0; i < k; ++i) {
    cum += sorted[static_cast<std::size_t>(i)];
    const double t = (cum - radius) / static_cast<double>(i + 1);
    if (sorted[static_cast<std::size_t>(i)] - t > 0.0) theta = t;
  }
  u = (u.array() - theta).cwiseMax(0.0).matrix();
}

void project_l1_ball(Vector& v, double radius) {
  if (v.size() == 0 || v.lpNorm<1>() <= radius) return;
  Vector a = v.cwiseAbs();
  project_simplex(a, radius);
  for (Index i = 0; i < v.size(); ++i) v(i) = v(i) < 0.0 ? -a(i) : a(i);
}

struct PatternResult {
  double value = std::numeric_limits<double>::infinity();
  double gap = 0.0;
  Vector beta;
};

// min k·βᵀGβ over sᵢβ_{Sᵢ} ∈ simplex, β_{-S} ∈ L·B₁ for one sign pattern.
// FISTA with restart; certified by the Frank–Wolfe gap, which bounds the
// distance to the optimal value of this convex subproblem.
class PatternSolver {
 public:
  PatternSolver(const Matrix& gram, const IndexSet& S, const IndexSet& rest, double L, double lip,
                const CompatibilityOptions& opts)
      : gram_(gram), S_(S), rest_(rest), L_(L), k_(static_cast<double>(S.size())), opts_(opts) {
    step_ = 1.0 / (2.0 * k_ * std::max(lip, 1e-300));
  }

  PatternResult solve(const std::vector<int>& signs, std::uint64_t pattern_id) const {
    PatternResult best;
    for (int r = 0; r < opts_.restarts; ++r) {
      Vector beta = start(signs, pattern_id, r);
      PatternResult res = run(signs, beta);
      if (res.value < best.value) best = std::move(res);
      // convex subproblem: once certified, further starts cannot improve it
      if (best.gap <= opts_.tol) break;
    }
    return best;
  }

 private:
  Vector start(const std::vector<int>& signs, std::uint64_t pattern_id, int r) const {
    const Index p = gram_.rows();
    Vector beta = Vector::Zero(p);
    const Index k = static_cast<Index>(S_.size());
    if (r == 0) {
      for (Index i = 0; i < k; ++i) beta(S_[i]) = signs[static_cast<std::size_t>(i)] / static_cast<double>(k);
      return beta;
    }
    RandomStream rs(opts_.seed, pattern_id * 64 + static_cast<std::uint64_t>(r), "compat-start");
    Vector u(k);
    for (Index i = 0; i < k; ++i) u(i) = rs.uniform();
    project_simplex(u, 1.0);
    for (Index i = 0; i < k; ++i) beta(S_[i]) = signs[static_cast<std::size_t>(i)] * u(i);
    Vector v(static_cast<Index>(rest_.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = rs.uniform(-L_, L_);
    project_l1_ball(v, L_);
    for (Index i = 0; i < v.size(); ++i) beta(rest_[i]) = v(i);
    return beta;
  }

  void project(const std::vector<int>& signs, Vector& beta) const {
    const Index k = static_cast<Index>(S_.size());
    Vector u(k);
    for (Index i = 0; i < k; ++i) u(i) = signs[static_cast<std::size_t>(i)] * beta(S_[i]);
    project_simplex(u, 1.0);
    for (Index i = 0; i < k; ++i) beta(S_[i]) = signs[static_cast<std::size_t>(i)] * u(i);
    Vector v(static_cast<Index>(rest_.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = beta(rest_[i]);
    project_l1_ball(v, L_);
    for (Index i = 0; i < v.size(); ++i) beta(rest_[i]) = v(i);
  }

  double value(const Vector& beta) const { return k_ * beta.dot(gram_ * beta); }

  double fw_gap(const std::vector<int>& signs, const Vector& beta, const Vector& grad) const {
    double lin_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < S_.size(); ++i) lin_min = std::min(lin_min, signs[i] * grad(S_[i]));
    double rest_max = 0.0;
    for (Index j : rest_) rest_max = std::max(rest_max, std::abs(grad(j)));
    return grad.dot(beta) - (lin_min - L_ * rest_max);
  }

  PatternResult run(const std::vector<int>& signs, Vector beta) const {
    Vector y = beta;
    double t = 1.0;
    double f = value(beta);
    PatternResult res;
    for (int it = 0; it < opts_.max_iter; ++it) {
      if (it % 20 == 0) {
        double gap = fw_gap(signs, beta, 2.0 * k_ * (gram_ * beta));
        if (gap > opts_.tol) {
          // FISTA finds the face long before it certifies; solve on the face
          Vector cand = beta;
          if (face_solve(signs, cand)) {
            const double fc = value(cand);
            const double gc = fw_gap(signs, cand, 2.0 * k_ * (gram_ * cand));
            if (fc <= f && gc < gap) {
              beta = cand, y = cand, t = 1.0, f = fc, gap = gc;
            }
          }
        }
        res.gap = gap;
        if (gap <= opts_.tol) break;
      }
      Vector next = y - step_ * (2.0 * k_ * (gram_ * y));
      project(signs, next);
      const double f_next = value(next);
      if (f_next > f) {
        // restart momentum from the current point
        y = beta;
        t = 1.0;
        continue;
      }
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = next + ((t - 1.0) / t_next) * (next - beta);
      t = t_next;
      beta = std::move(next);
      f = f_next;
    }
    const Vector g = 2.0 * k_ * (gram_ * beta);
    res.gap = std::max(0.0, fw_gap(signs, beta, g));
    res.value = f;
    res.beta = std::move(beta);
    return res;
  }

  // Stationary point of k·βᵀGβ on the affine hull of the face holding
  // beta (same support and signs; the ball constraint if it is tight).
  // Returns false when that point leaves the face.
  bool face_solve(const std::vector<int>& signs, Vector& beta) const {
    std::vector<Index> idx;
    std::vector<double> a_s, a_r;
    for (std::size_t i = 0; i < S_.size(); ++i) {
      if (beta(S_[i]) != 0.0) idx.push_back(S_[i]), a_s.push_back(signs[i]), a_r.push_back(0.0);
    }
    double rest_l1 = 0.0;
    for (Index j : rest_) rest_l1 += std::abs(beta(j));
    const bool ball = L_ > 0.0 && rest_l1 >= L_ * (1.0 - 1e-12);
    for (Index j : rest_) {
      if (beta(j) != 0.0) idx.push_back(j), a_s.push_back(0.0), a_r.push_back(beta(j) > 0.0 ? 1.0 : -1.0);
    }
    const Index m = static_cast<Index>(idx.size());
    const Index c = ball ? 2 : 1;
    Matrix kkt = Matrix::Zero(m + c, m + c);
    Vector rhs = Vector::Zero(m + c);
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < m; ++j) kkt(i, j) = 2.0 * k_ * gram_(idx[i], idx[j]);
      kkt(i, m) = kkt(m, i) = a_s[static_cast<std::size_t>(i)];
      if (ball) kkt(i, m + 1) = kkt(m + 1, i) = a_r[static_cast<std::size_t>(i)];
    }
    rhs(m) = 1.0;
    if (ball) rhs(m + 1) = L_;
    const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    if (!sol.allFinite() || (kkt * sol - rhs).cwiseAbs().maxCoeff() > 1e-9) return false;
    Vector out = Vector::Zero(beta.size());
    for (Index i = 0; i < m; ++i) {
      const double sign = a_s[static_cast<std::size_t>(i)] + a_r[static_cast<std::size_t>(i)];
      if (sign * sol(i) < 0.0) return false;
      out(idx[i]) = sol(i);
    }
    double l1 = 0.0;
    for (Index j : rest_) l1 += std::abs(out(j));
    if (l1 > L_ * (1.0 + 1e-12)) return false;
    project(signs, out);  // removes rounding drift off the constraint set
    beta = std::move(out);
    return true;
  }

  const Matrix& gram_;
  const IndexSet& S_;
  const IndexSet& rest_;
  double L_;
  double k_;
  double step_;
  const CompatibilityOptions& opts_;
};

}  // namespace

CompatibilityResult compatibility_constant(const Matrix& x, const IndexSet& S, double L, CompatibilityMode mode,
                                           const CompatibilityOptions& opts) {
  const Index p = x.cols();
  check_index_set(S, p, "compatibility_constant");
  if (S.empty()) throw InvalidInput("compatibility_constant: S must be nonempty");
  if (!(L >= 0.0) || !std::isfinite(L)) throw InvalidInput("compatibility_constant: L must be finite and >= 0");
  if (opts.restarts < 1 || opts.max_iter < 1) throw InvalidInput("compatibility_constant: bad options");
  const Index k = static_cast<Index>(S.size());
  if (mode == CompatibilityMode::Exact && k > kMaxExactCompatibilitySet) {
    throw InvalidInput("compatibility_constant: exact mode refuses |S| > 12 (" + std::to_string(k) + ")");
  }

  const Matrix gram = (x.transpose() * x) / static_cast<double>(x.rows());
  const IndexSet rest = complement(S, p);
  const double lip = max_eigenvalue(gram);
  const PatternSolver solver(gram, S, rest, L, lip, opts);

  // Patterns with the first sign fixed to +1; β ↦ -β maps the others onto these.
  std::vector<std::uint64_t> codes;
  bool exact = true;
  const std::uint64_t total = std::uint64_t{1} << (k - 1);
  if (mode == CompatibilityMode::Exact || total <= static_cast<std::uint64_t>(opts.heuristic_patterns)) {
    codes.resize(total);
    std::iota(codes.begin(), codes.end(), std::uint64_t{0});
  } else {
    exact = false;
    RandomStream rs(opts.seed, 0, "compat-heuristic");
    codes.reserve(static_cast<std::size_t>(opts.heuristic_patterns));
    for (int i = 0; i < opts.heuristic_patterns; ++i) codes.push_back(rs.below(total));
  }

  std::vector<PatternResult> results(codes.size());
  const long count = static_cast<long>(codes.size());
#pragma omp parallel for schedule(dynamic, 1) if (count > 8)
  for (long c = 0; c < count; ++c) {
    const std::uint64_t code = codes[static_cast<std::size_t>(c)];
    std::vector<int> signs(static_cast<std::size_t>(k), 1);
    for (Index i = 1; i < k; ++i) signs[static_cast<std::size_t>(i)] = ((code >> (i - 1)) & 1U) ? -1 : 1;
    results[static_cast<std::size_t>(c)] = solver.solve(signs, code);
  }

  CompatibilityResult out;
  out.exact = exact;
  out.patterns = static_cast<std::int64_t>(codes.size());
  out.value = std::numeric_limits<double>::infinity();
  out.lower_bound = std::numeric_limits<double>::infinity();
  for (auto& r : results) {
    out.max_gap = std::max(out.max_gap, r.gap);
    out.lower_bound = std::min(out.lower_bound, std::max(0.0, r.value - r.gap));
    if (r.value < out.value) {
      out.value = r.value;
      out.argmin = r.beta;
    }
  }
  return out;
}

std::vector<IndexSet> oracle_candidate_sets(const Vector& beta0, bool extra_candidates) {
  IndexSet S0;
  for (Index j = 0; j < beta0.size(); ++j)
    if (beta0(j) != 0.0) S0.push_back(j);
  std::vector<IndexSet> sets{S0};
  if (extra_candidates) {
    if (!S0.empty()) sets.push_back({});
    if (S0.size() > 1)
      for (Index j : S0) sets.push_back({j});
  }
  return sets;
}

OracleReport oracle_inequality_check(const SqrtLassoFit& fit, const Matrix& x, const Vector& beta0,
                                     const Vector& eps, const OracleSettings& st) {
  const Index p = x.cols();
  if (beta0.size() != p || fit.beta_hat.size() != p) throw InvalidInput("oracle_inequality_check: shape mismatch");
  if (!(st.eta > 0.0 && st.eta < 1.0)) throw InvalidInput("oracle_inequality_check: eta must lie in (0, 1)");
  if (!(st.delta >= 0.0 && st.delta < 1.0)) throw InvalidInput("oracle_inequality_check: delta must lie in [0, 1)");

  OracleReport rep;
  const double lambda0 = fit.lambda0;
  rep.eps_norm = norm_n(eps);
  rep.R_hat = empirical_R_hat(x, eps);
  rep.event_holds = rep.R_hat <= st.R && rep.eps_norm >= st.sigma_lower;
  rep.sparsity_holds = l1_sparsity_check(beta0, lambda0, st.sigma_lower, st.eta);
  rep.lambda_under = lambda0 * (1.0 - st.eta) - st.R;
  rep.applicable = rep.event_holds && rep.sparsity_holds && rep.lambda_under > 0.0;
  if (!(rep.lambda_under > 0.0)) return rep;
  rep.lambda_bar = lambda0 * (1.0 + st.eta) + st.R + st.delta * rep.lambda_under;
  rep.L = rep.lambda_bar / ((1.0 - st.delta) * rep.lambda_under);

  const double en = rep.eps_norm;
  const double two_dl = 2.0 * st.delta * rep.lambda_under;
  const Vector diff_hat = fit.beta_hat - beta0;
  rep.lhs = two_dl * diff_hat.lpNorm<1>() * en + (x * diff_hat).squaredNorm() / static_cast<double>(x.rows());

  const std::vector<IndexSet> sets = oracle_candidate_sets(beta0, st.extra_candidates);
  rep.rhs = std::numeric_limits<double>::infinity();
  for (const auto& S : sets) {
    OracleCandidate c;
    c.S = S;
    Vector beta = Vector::Zero(p);
    for (Index j : S) beta(j) = beta0(j);
    const Vector d = beta - beta0;
    c.approximation = two_dl * d.lpNorm<1>() * en + (x * d).squaredNorm() / static_cast<double>(x.rows());
    if (!S.empty()) {
      // The computed φ̂² is attained by a feasible point, so it can only
      // overestimate the minimum; the resulting RHS is never too generous.
      const auto hit = st.phi_sq_cache.find(S);
      c.phi_sq = hit != st.phi_sq_cache.end()
                     ? hit->second
                     : compatibility_constant(x, S, rep.L, CompatibilityMode::Exact, st.compat).value;
      c.estimation = rep.lambda_bar * rep.lambda_bar * static_cast<double>(S.size()) * en * en / c.phi_sq;
    }
    c.rhs = c.approximation + c.estimation;
    rep.rhs = std::min(rep.rhs, c.rhs);
    rep.candidates.push_back(std::move(c));
  }
  // rounding slack only: both sides agree bit-for-bit in the tight case β̂ = 0, S = ∅
  rep.holds = rep.lhs <= rep.rhs * (1.0 + 1e-12) + 1e-15;
  return rep;
}

SparsityReport weak_sparsity_bounds(const Vector& beta0, double eps_norm, double R, double sigma_lower, double eta,
                                    const Matrix& x, double r_exponent, double rho_r,
                                    const CompatibilityOptions& compat) {
  if (!(r_exponent > 0.0 && r_exponent < 1.0)) throw InvalidInput("weak_sparsity_bounds: r must lie in (0, 1)");
  if (!(eta > 0.0 && eta <= 1.0 / 3.0)) throw InvalidInput("weak_sparsity_bounds: eta must lie in (0, 1/3]");
  if (!(R > 0.0) || !(sigma_lower > 0.0)) throw InvalidInput("weak_sparsity_bounds: R and sigma_lower must be positive");
  if (beta0.size() != x.cols()) throw InvalidInput("weak_sparsity_bounds: beta0 length differs from X columns");

  SparsityReport rep;
  rep.eta = eta;
  rep.r_exponent = r_exponent;
  rep.l1_norm_beta0 = beta0.lpNorm<1>();
  for (Index j = 0; j < beta0.size(); ++j)
    if (beta0(j) != 0.0) rep.S0.push_back(j);
  rep.s0 = static_cast<Index>(rep.S0.size());
  if (rho_r > 0.0) {
    rep.rho_r = rho_r;
  } else {
    rep.rho_r = std::pow(beta0.cwiseAbs().array().pow(r_exponent).sum(), 1.0 / r_exponent);
  }

  const double lambda0 = 2.0 * R / (1.0 - eta);
  rep.lambda_under = R;
  rep.lambda_bar = lambda0 * (1.0 + eta) + R + rep.delta * R;
  rep.L = rep.lambda_bar / ((1.0 - rep.delta) * R);

  if (rep.s0 > 0) {
    const Matrix xs = select_cols(x, rep.S0);
    rep.Lambda_max_S0 = std::sqrt(max_eigenvalue((xs.transpose() * xs) / static_cast<double>(x.rows())));
    const double t_star = 3.0 * R * sigma_lower / rep.Lambda_max_S0;
    const double t_hat = rep.lambda_bar * eps_norm / rep.Lambda_max_S0;
    for (Index j : rep.S0) {
      if (std::abs(beta0(j)) > t_star) rep.S_star.push_back(j);
      if (std::abs(beta0(j)) > t_hat) rep.S_hat_star.push_back(j);
    }
    // smaller φ̂² makes the bounds larger, so take the certified lower end
    rep.phi_sq_S0 = compatibility_constant(x, rep.S0, 6.0, CompatibilityMode::Exact, compat).lower_bound;
    if (!rep.S_star.empty()) {
      rep.phi_sq_S_star = compatibility_constant(x, rep.S_star, 6.0, CompatibilityMode::Exact, compat).lower_bound;
    }
  }

  const double r = r_exponent;
  rep.lr_bound = std::pow(6.0 * R, 1.0 - r) *
                 (1.0 + 36.0 * std::pow(rep.Lambda_max_S0, r) / rep.phi_sq_S_star) *
                 std::pow(rep.rho_r / sigma_lower, r);
  rep.l0_bound = 3.0 * R * 36.0 * static_cast<double>(rep.s0) / rep.phi_sq_S0;
  return rep;
}

}  // namespace chi2sets
