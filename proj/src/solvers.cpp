#include "chi2sets/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chi2sets/error.hpp"

namespace chi2sets {

namespace {

// Spectral data of Σ = RᵀR/n needed by one msrL step.
struct ResidualGeometry {
  Matrix omega_inv;   // Σ^{-1/2}, eigenvalues floored at floor²
  double omega_min;   // smallest floored ω
  double loss;        // trace Σ^{1/2} = ‖R‖_nuclear/√n
  double min_eigen;   // unfloored λ_min(Σ)
};

ResidualGeometry residual_geometry(const Matrix& r, double floor) {
  const double n = static_cast<double>(r.rows());
  const Matrix sigma = (r.transpose() * r) / n;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  const Vector& ev = es.eigenvalues();
  const Vector omega = ev.cwiseMax(floor * floor).cwiseSqrt();
  ResidualGeometry g;
  g.omega_inv = es.eigenvectors() * omega.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  g.omega_min = omega.minCoeff();
  g.loss = ev.cwiseMax(0.0).cwiseSqrt().sum();
  g.min_eigen = ev.minCoeff();
  return g;
}

void polish_active_set(const Matrix& x, const Matrix& y, double lambda0, const Penalty& pen, double floor,
                       Matrix& b);

double gram_max_eigenvalue(const Matrix& x) {
  const double n = static_cast<double>(x.rows());
  if (x.rows() < x.cols()) return max_eigenvalue((x * x.transpose()) / n);
  return max_eigenvalue((x.transpose() * x) / n);
}

void check_problem(const Matrix& x, const Matrix& y, double lambda0, const char* who) {
  if (x.rows() < 1 || x.cols() < 1) throw InvalidInput(std::string(who) + ": empty design");
  if (y.rows() != x.rows()) throw InvalidInput(std::string(who) + ": response rows do not match design");
  if (y.cols() < 1) throw InvalidInput(std::string(who) + ": response has no columns");
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) {
    throw InvalidInput(std::string(who) + ": lambda0 must be finite and >= 0");
  }
  if (!x.allFinite() || !y.allFinite()) throw InvalidInput(std::string(who) + ": non-finite input");
  for (Index j = 0; j < x.cols(); ++j) {
    if (x.col(j).squaredNorm() == 0.0) throw InvalidInput(std::string(who) + ": design has a zero column");
  }
}

struct IterationResult {
  Matrix b;
  int iterations = 0;
  bool converged = false;
  double k_scale = 1.0;
  double floor = 0.0;
  std::vector<double> trace;
};

IterationResult run_msrl(const Matrix& x, const Matrix& y, double lambda0, const Penalty& pen,
                         const SolverOptions& opts) {
  const Index p = x.cols();
  const Index q = y.cols();
  const double n = static_cast<double>(x.rows());

  IterationResult out;
  out.k_scale = opts.k_scale > 0.0 ? opts.k_scale : std::max(1.0, std::sqrt(gram_max_eigenvalue(x)));
  const double step_base = 1.0 / (out.k_scale * out.k_scale);
  const double y_rms = std::sqrt(y.squaredNorm() / (n * static_cast<double>(q)));
  out.floor = opts.sigma_floor * y_rms;
  if (y_rms == 0.0) {
    out.b = Matrix::Zero(p, q);
    out.converged = true;
    return out;
  }

  auto objective = [&](const Matrix& b, double loss) { return loss + lambda0 * pen.value(b); };

  // B = 0 is optimal iff the dual at zero is feasible.
  {
    const ResidualGeometry g0 = residual_geometry(y, out.floor);
    if (g0.min_eigen > out.floor * out.floor) {
      const Matrix z0 = x.transpose() * y * g0.omega_inv / n;
      if (pen.dual(z0) <= lambda0) {
        const bool warm = opts.warm_start.has_value() && opts.warm_start->cwiseAbs().maxCoeff() > 0.0;
        if (!warm || objective(Matrix::Zero(p, q), g0.loss) <=
                         objective(*opts.warm_start,
                                   residual_geometry(y - x * *opts.warm_start, out.floor).loss)) {
          out.b = Matrix::Zero(p, q);
          out.converged = true;
          if (opts.record_objective) out.trace.push_back(objective(out.b, g0.loss));
          return out;
        }
      }
    }
  }

  Matrix b = Matrix::Zero(p, q);
  if (opts.warm_start) {
    if (opts.warm_start->rows() != p || opts.warm_start->cols() != q) {
      throw InvalidInput("msrL: warm start has the wrong shape");
    }
    b = *opts.warm_start;
  }
  Matrix r = y - x * b;
  ResidualGeometry geo = residual_geometry(r, out.floor);
  double f = objective(b, geo.loss);
  if (opts.record_objective) out.trace.push_back(f);

  Matrix v = b;
  Matrix r_v = r;
  ResidualGeometry geo_v = geo;
  double momentum_t = 1.0;

  for (int it = 1; it <= opts.max_iter; ++it) {
    const double step = step_base * geo_v.omega_min;
    const Matrix grad = x.transpose() * r_v * geo_v.omega_inv / n;
    Matrix b_next = pen.prox(v + step * grad, step * lambda0);
    Matrix r_next = y - x * b_next;
    ResidualGeometry geo_next = residual_geometry(r_next, out.floor);
    double f_next = objective(b_next, geo_next.loss);

    if (f_next > f && momentum_t > 1.0) {
      // momentum overshot: take a plain step from b instead
      momentum_t = 1.0;
      v = b;
      r_v = r;
      geo_v = geo;
      --it;
      continue;
    }

    const double change = (b_next - v).cwiseAbs().maxCoeff();
    const Matrix delta = b_next - b;
    const Matrix r_delta = r_next - r;
    b = std::move(b_next);
    r = std::move(r_next);
    geo = std::move(geo_next);
    f = f_next;
    if (opts.record_objective) out.trace.push_back(f);
    out.iterations = it;

    if (change <= opts.fix_tol * step) {
      out.converged = true;
      break;
    }

    if (opts.accelerate) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
      const double theta = (momentum_t - 1.0) / t_next;
      momentum_t = t_next;
      if (theta > 0.0) {
        v = b + theta * delta;
        r_v = r + theta * r_delta;
        geo_v = residual_geometry(r_v, out.floor);
        continue;
      }
    }
    v = b;
    r_v = r;
    geo_v = geo;
  }
  if (out.converged && opts.polish) polish_active_set(x, y, lambda0, pen, out.floor, b);
  out.b = std::move(b);
  return out;
}


// Newton refinement of the KKT equalities on a fixed active pattern:
//   [XᵀRΣ^{-1/2}/n]_a = λ ∂Ω(B)_a  for every active entry a.
// The msrL iteration identifies the pattern but only reaches the equalities
// to within its stopping tolerance; a few Newton steps bring them to rounding
// level. The refinement is discarded unless it keeps the pattern, does not
// raise the objective and lowers the KKT residual.
void polish_active_set(const Matrix& x, const Matrix& y, double lambda0, const Penalty& pen, double floor,
                       Matrix& b) {
  const Index q = y.cols();
  const double n = static_cast<double>(x.rows());

  struct Entry {
    Index row, col;
    int block;  // index into pen.blocks(), -1 for ℓ1
  };
  std::vector<Entry> active;
  if (pen.kind() == NormKind::L1) {
    for (Index c = 0; c < q; ++c)
      for (Index j = 0; j < b.rows(); ++j)
        if (b(j, c) != 0.0) active.push_back({j, c, -1});
  } else {
    const auto& blocks = pen.blocks();
    for (Index c = 0; c < q; ++c)
      for (std::size_t t = 0; t < blocks.size(); ++t) {
        double sq = 0.0;
        for (Index j : blocks[t].idx) sq += b(j, c) * b(j, c);
        if (sq == 0.0) continue;
        for (Index j : blocks[t].idx) active.push_back({j, c, static_cast<int>(t)});
      }
  }
  const Index m = static_cast<Index>(active.size());
  if (m == 0) return;

  IndexSet rows;
  for (const auto& e : active) rows.push_back(e.row);
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  std::vector<Index> local(static_cast<std::size_t>(b.rows()), -1);
  for (std::size_t k = 0; k < rows.size(); ++k) local[static_cast<std::size_t>(rows[k])] = static_cast<Index>(k);
  const Matrix x_rows = select_cols(x, rows);
  const Matrix gram = x_rows.transpose() * x_rows / n;

  struct State {
    Vector F;
    Matrix V;
    Vector omega;
    Matrix omega_inv;
    Matrix H;  // X_rowsᵀR/n
    bool ok = false;
  };
  auto block_norm = [&](int t, Index c, const Matrix& bb) {
    double sq = 0.0;
    for (Index j : pen.blocks()[static_cast<std::size_t>(t)].idx) sq += bb(j, c) * bb(j, c);
    return std::sqrt(sq);
  };
  auto evaluate = [&](const Matrix& bb) {
    State st;
    const Matrix r = y - x * bb;
    Eigen::SelfAdjointEigenSolver<Matrix> es((r.transpose() * r) / n);
    if (!(es.eigenvalues().minCoeff() > floor * floor)) return st;
    st.V = es.eigenvectors();
    st.omega = es.eigenvalues().cwiseSqrt();
    st.omega_inv = st.V * st.omega.cwiseInverse().asDiagonal() * st.V.transpose();
    st.H = x_rows.transpose() * r / n;
    const Matrix g = st.H * st.omega_inv;
    st.F.resize(m);
    for (Index a = 0; a < m; ++a) {
      const auto& e = active[static_cast<std::size_t>(a)];
      double sub;
      if (e.block < 0) {
        sub = bb(e.row, e.col) > 0.0 ? 1.0 : -1.0;
      } else {
        const auto& blk = pen.blocks()[static_cast<std::size_t>(e.block)];
        sub = blk.weight * bb(e.row, e.col) / block_norm(e.block, e.col, bb);
      }
      st.F(a) = g(local[static_cast<std::size_t>(e.row)], e.col) - lambda0 * sub;
    }
    st.ok = true;
    return st;
  };
  auto pattern_kept = [&](const Matrix& before, const Matrix& after) {
    for (const auto& e : active) {
      if (e.block < 0) {
        if (before(e.row, e.col) * after(e.row, e.col) <= 0.0) return false;
      } else if (block_norm(e.block, e.col, after) == 0.0) {
        return false;
      }
    }
    return true;
  };

  const Matrix b_start = b;
  State st = evaluate(b);
  if (!st.ok) return;
  const double res_start = st.F.cwiseAbs().maxCoeff();
  const double target = 1e-14 * std::max(1.0, lambda0);

  Matrix cur = b;
  double res = res_start;
  for (int it = 0; it < 20 && res > target; ++it) {
    Matrix jac(m, m);
    for (Index col = 0; col < m; ++col) {
      const auto& d = active[static_cast<std::size_t>(col)];
      const Index k = local[static_cast<std::size_t>(d.row)];
      // dΣ for dB = E_{k,d}: -(e_d uᵀ + u e_dᵀ) with u = RᵀX_k/n
      const Vector u = st.H.row(k).transpose();
      Matrix dsigma = Matrix::Zero(q, q);
      dsigma.row(d.col) -= u.transpose();
      dsigma.col(d.col) -= u;
      Matrix tilde = st.V.transpose() * dsigma * st.V;
      for (Index i = 0; i < q; ++i)
        for (Index l = 0; l < q; ++l)
          tilde(i, l) = -tilde(i, l) / ((st.omega(i) + st.omega(l)) * st.omega(i) * st.omega(l));
      const Matrix d_omega_inv = st.V * tilde * st.V.transpose();
      const Matrix dg = st.H * d_omega_inv;
      for (Index a = 0; a < m; ++a) {
        const auto& e = active[static_cast<std::size_t>(a)];
        const Index j = local[static_cast<std::size_t>(e.row)];
        double v = dg(j, e.col) - gram(j, k) * st.omega_inv(d.col, e.col);
        if (e.block >= 0 && e.block == d.block && e.col == d.col) {
          const auto& blk = pen.blocks()[static_cast<std::size_t>(e.block)];
          const double nrm = block_norm(e.block, e.col, cur);
          const double ue = cur(e.row, e.col) / nrm;
          const double ud = cur(d.row, d.col) / nrm;
          v -= lambda0 * blk.weight * ((e.row == d.row ? 1.0 : 0.0) - ue * ud) / nrm;
        }
        jac(a, col) = v;
      }
    }
    const Eigen::FullPivLU<Matrix> lu(jac);
    if (!lu.isInvertible()) break;
    const Vector step = lu.solve(-st.F);
    if (!step.allFinite()) break;
    Matrix next = cur;
    for (Index a = 0; a < m; ++a) {
      const auto& e = active[static_cast<std::size_t>(a)];
      next(e.row, e.col) += step(a);
    }
    if (!pattern_kept(b_start, next)) break;
    State st_next = evaluate(next);
    if (!st_next.ok) break;
    const double res_next = st_next.F.cwiseAbs().maxCoeff();
    if (!(res_next < res)) break;
    cur = std::move(next);
    st = std::move(st_next);
    res = res_next;
  }
  if (!(res < res_start)) return;

  auto full_objective = [&](const Matrix& bb) {
    const Matrix r = y - x * bb;
    Eigen::SelfAdjointEigenSolver<Matrix> es((r.transpose() * r) / n, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum() + lambda0 * pen.value(bb);
  };
  auto inactive_dual = [&](const Matrix& bb) {
    const Matrix r = y - x * bb;
    const Matrix z = x.transpose() * r * psd_inv_sqrt((r.transpose() * r) / n, 0.0) / n;
    return pen.dual(z);
  };
  const double f0 = full_objective(b_start);
  const double f1 = full_objective(cur);
  if (f1 > f0 + 1e-13 * std::max(1.0, std::abs(f0))) return;
  if (inactive_dual(cur) > std::max(lambda0 * (1.0 + 1e-12), inactive_dual(b_start))) return;
  b = std::move(cur);
}

}  // namespace

double sqrt_lasso_objective(const Matrix& x, const Vector& y, const Vector& beta, double lambda0) {
  return norm_n(y - x * beta) + lambda0 * beta.lpNorm<1>();
}

double multi_objective(const Matrix& x, const Matrix& y, const Matrix& b, double lambda0,
                       const NormSpec& norm) {
  const Penalty pen(norm, x.cols());
  return nuclear_norm(y - x * b) / std::sqrt(static_cast<double>(x.rows())) + lambda0 * pen.value(b);
}

SqrtLassoFit fit_sqrt_lasso(const Matrix& x, const Vector& y, double lambda0, const SolverOptions& opts) {
  check_problem(x, y, lambda0, "fit_sqrt_lasso");
  const Penalty pen(NormSpec::l1(), x.cols());
  IterationResult res = run_msrl(x, y, lambda0, pen, opts);

  SqrtLassoFit fit;
  fit.beta_hat = res.b.col(0);
  fit.residuals = y - x * fit.beta_hat;
  fit.sigma_hat = norm_n(fit.residuals);
  fit.lambda0 = lambda0;
  fit.iterations = res.iterations;
  fit.converged = res.converged;
  fit.k_scale = res.k_scale;
  fit.objective_trace = std::move(res.trace);
  fit.degenerate = fit.sigma_hat <= res.floor;
  if (!fit.converged && !fit.degenerate) {
    std::ostringstream msg;
    msg << "fit_sqrt_lasso: no convergence after " << res.iterations << " iterations";
    throw NonConvergence(msg.str(), res.b, res.iterations);
  }
  return fit;
}

MultiFit fit_multi_sqrt_lasso(const Matrix& x, const Matrix& y, double lambda0, const NormSpec& norm,
                              const SolverOptions& opts) {
  check_problem(x, y, lambda0, "fit_multi_sqrt_lasso");
  const Penalty pen(norm, x.cols());
  IterationResult res = run_msrl(x, y, lambda0, pen, opts);

  MultiFit fit;
  const Matrix r = y - x * res.b;
  fit.Sigma_hat = (r.transpose() * r) / static_cast<double>(x.rows());
  fit.B_hat = std::move(res.b);
  fit.lambda0 = lambda0;
  fit.iterations = res.iterations;
  fit.converged = res.converged;
  fit.K_scale = res.k_scale;
  fit.objective_trace = std::move(res.trace);

  Eigen::SelfAdjointEigenSolver<Matrix> es(fit.Sigma_hat, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo > res.floor * res.floor)) {
    std::ostringstream msg;
    msg << "fit_multi_sqrt_lasso: residual covariance is singular (lambda_min = " << lo << ")";
    throw DegenerateFit(msg.str());
  }
  if (!fit.converged) {
    std::ostringstream msg;
    msg << "fit_multi_sqrt_lasso: no convergence after " << res.iterations << " iterations";
    throw NonConvergence(msg.str(), fit.B_hat, res.iterations);
  }
  return fit;
}

namespace {

// Shared tail of both KKT checks: z is the scaled gradient XᵀRΣ̂^{-1/2}/n.
KktReport summarize_kkt(const Matrix& grad, const Matrix& b, double lambda0, double tol, const Penalty& pen) {
  KktReport rep;
  rep.tolerance_used = tol;
  rep.stationarity = grad.cwiseAbs().maxCoeff();
  if (lambda0 == 0.0) {
    rep.dual_applicable = false;
    for (Index c = 0; c < b.cols(); ++c)
      for (Index j = 0; j < b.rows(); ++j) rep.active_set_size += b(j, c) != 0.0;
    return rep;
  }
  const Matrix z = grad / lambda0;
  rep.max_dual_violation = std::max(0.0, pen.dual(z) - 1.0);
  if (pen.kind() == NormKind::L1) {
    for (Index c = 0; c < b.cols(); ++c) {
      for (Index j = 0; j < b.rows(); ++j) {
        if (b(j, c) == 0.0) continue;
        ++rep.active_set_size;
        const double s = b(j, c) > 0.0 ? 1.0 : -1.0;
        if (std::abs(z(j, c) - s) > tol) ++rep.sign_mismatch_count;
      }
    }
    return rep;
  }
  for (Index c = 0; c < b.cols(); ++c) {
    for (const auto& blk : pen.blocks()) {
      double sq = 0.0;
      for (Index j : blk.idx) sq += b(j, c) * b(j, c);
      if (sq == 0.0) continue;
      ++rep.active_set_size;
      const double nrm = std::sqrt(sq);
      double worst = 0.0;
      for (Index j : blk.idx) worst = std::max(worst, std::abs(z(j, c) - blk.weight * b(j, c) / nrm));
      if (worst > tol) ++rep.sign_mismatch_count;
    }
  }
  return rep;
}

}  // namespace

KktReport kkt_check_sqrt(const SqrtLassoFit& fit, const Matrix& x, const Vector& y, double tol) {
  if (x.rows() != y.size() || x.cols() != fit.beta_hat.size()) {
    throw InvalidInput("kkt_check_sqrt: shape mismatch");
  }
  const Vector resid = y - x * fit.beta_hat;
  const double sigma = norm_n(resid);
  if (!(sigma > 0.0)) throw DegenerateFit("kkt_check_sqrt: sigma_hat is zero");
  const Matrix grad = x.transpose() * resid / (static_cast<double>(x.rows()) * sigma);
  return summarize_kkt(grad, fit.beta_hat, fit.lambda0, tol, Penalty(NormSpec::l1(), x.cols()));
}

KktReport kkt_check_multi(const MultiFit& fit, const Matrix& x, const Matrix& y, double tol,
                          const NormSpec& norm) {
  if (x.rows() != y.rows() || x.cols() != fit.B_hat.rows() || y.cols() != fit.B_hat.cols()) {
    throw InvalidInput("kkt_check_multi: shape mismatch");
  }
  const Matrix r = y - x * fit.B_hat;
  const double n = static_cast<double>(x.rows());
  Matrix inv_sqrt;
  try {
    inv_sqrt = psd_inv_sqrt((r.transpose() * r) / n);
  } catch (const SingularMatrix& e) {
    throw DegenerateFit(std::string("kkt_check_multi: ") + e.what());
  }
  const Matrix grad = x.transpose() * r * inv_sqrt / n;
  return summarize_kkt(grad, fit.B_hat, fit.lambda0, tol, Penalty(norm, x.cols()));
}

double noise_correlation_bound(Index n, Index p, double alpha0, double alpha_lower) {
  if (n < 1 || p < 1) throw InvalidInput("noise_correlation_bound: n and p must be >= 1");
  if (!(alpha0 > 0.0 && alpha0 < 1.0) || !(alpha_lower > 0.0 && alpha_lower < 1.0)) {
    throw InvalidInput("noise_correlation_bound: error levels must lie in (0, 1)");
  }
  const double nn = static_cast<double>(n);
  const double log_lower = std::log(1.0 / alpha_lower);
  if (!(log_lower < nn / 4.0)) throw InvalidInput("noise_correlation_bound: need log(1/alpha_lower) < n/4");
  const double denom = nn - 2.0 * std::sqrt(nn * log_lower);
  return std::sqrt(std::log(2.0 * static_cast<double>(p) / alpha0) / denom);
}

double theoretical_lambda0(Index n, Index p, double alpha0, double alpha_lower, double eta) {
  if (!(eta > 0.0 && eta <= 1.0 / 3.0)) throw InvalidInput("theoretical_lambda0: eta must lie in (0, 1/3]");
  return 2.0 * noise_correlation_bound(n, p, alpha0, alpha_lower) / (1.0 - eta);
}

double zero_solution_lambda(const Matrix& x, const Vector& y) {
  const double ny = norm_n(y);
  if (ny == 0.0) return 0.0;
  return (x.transpose() * y).cwiseAbs().maxCoeff() / (static_cast<double>(x.rows()) * ny);
}

}  // namespace chi2sets
