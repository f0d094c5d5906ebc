// chi2sets: fit, infer and simulate from the command line.
//
// Exit codes: 0 ok, 1 input error, 2 numerical/degenerate, 3 verify failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chi2sets/config.hpp"
#include "chi2sets/error.hpp"
#include "chi2sets/inference.hpp"
#include "chi2sets/io.hpp"
#include "chi2sets/rng.hpp"
#include "chi2sets/simulate.hpp"
#include "chi2sets/solvers.hpp"
#include "chi2sets/special.hpp"

namespace fs = std::filesystem;
using namespace chi2sets;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitVerify = 3;

std::string g_command_line;

// Keeps the manifest on disk in step with the run: written as "running"
// before any output, rewritten as "complete" or "failed" at the end.
class ManifestGuard {
 public:
  ManifestGuard(const fs::path& dir, RunManifest m) : path_((dir / "manifest.json").string()), m_(std::move(m)) {
    m_.command_line = g_command_line;
    m_.rng_algorithm = std::string(kRngAlgorithmId);
    m_.start_time = utc_timestamp();
    write_manifest(path_, m_);
  }
  ~ManifestGuard() {
    if (m_.status == "running") {
      m_.status = "failed";
      m_.end_time = utc_timestamp();
      try {
        write_manifest(path_, m_);
      } catch (...) {
      }
    }
  }
  void complete() {
    m_.status = "complete";
    m_.end_time = utc_timestamp();
    write_manifest(path_, m_);
  }

 private:
  std::string path_;
  RunManifest m_;
};

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (flag < 0) throw InvalidInput("--threads must be >= 1");
  if (const char* env = std::getenv("CHI2SETS_THREADS"); env && *env) {
    const long long v = parse_integer(env, "CHI2SETS_THREADS");
    if (v < 1) throw InvalidInput("CHI2SETS_THREADS must be >= 1");
    return static_cast<int>(v);
  }
  return default_thread_count();
}

NormSpec parse_norm(const std::string& text) {
  if (text.empty() || text == "l1") return NormSpec::l1();
  if (text.rfind("group:", 0) != 0) throw InvalidInput("--norm must be 'l1' or 'group:<i,j,...;k,...>'");
  std::vector<IndexSet> groups;
  std::string rest = text.substr(6);
  std::size_t start = 0;
  while (start <= rest.size()) {
    const auto semi = rest.find(';', start);
    const std::string part = rest.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
    if (!part.empty()) groups.push_back(parse_index_list(part, "--norm group"));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  if (groups.empty()) throw InvalidInput("--norm group: no groups given");
  return NormSpec::group(std::move(groups));
}

struct TheoryLevels {
  double alpha0 = 0.05;
  double alpha_lower = 0.05;
  double eta = 1.0 / 3.0;
};

void add_theory_flags(CLI::App* cmd, TheoryLevels& t) {
  cmd->add_option("--theory-alpha0", t.alpha0, "alpha0 of the theory rule")->capture_default_str();
  cmd->add_option("--theory-alpha-lower", t.alpha_lower, "alpha_lower of the theory rule")->capture_default_str();
  cmd->add_option("--theory-eta", t.eta, "eta of the theory rule")->capture_default_str();
}

// A number, or theory:<m>x for m × the theoretical level.
double resolve_lambda0(const std::string& text, Index n, Index p, const TheoryLevels& t) {
  if (text.rfind("theory:", 0) == 0) {
    std::string m = text.substr(7);
    if (!m.empty() && m.back() == 'x') m.pop_back();
    return parse_real(m, "--lambda0") * theoretical_lambda0(n, p, t.alpha0, t.alpha_lower, t.eta);
  }
  if (text == "theory") return theoretical_lambda0(n, p, t.alpha0, t.alpha_lower, t.eta);
  const double v = parse_real(text, "--lambda0");
  if (v < 0.0) throw InvalidInput("--lambda0 must be >= 0");
  return v;
}

Json kkt_json(const KktReport& k) {
  Json j;
  j["max_dual_violation"] = k.max_dual_violation;
  j["sign_mismatch_count"] = k.sign_mismatch_count;
  j["active_set_size"] = k.active_set_size;
  j["tolerance_used"] = k.tolerance_used;
  j["dual_applicable"] = k.dual_applicable;
  j["stationarity"] = k.stationarity;
  return j;
}

Json indices_json(const IndexSet& s) {
  Json a = Json::array();
  for (Index i : s) a.push_back(i + 1);
  return a;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string design, response, lambda0, norm, out = ".";
  bool multi = false;
  int max_iter = 50000;
  double fix_tol = 1e-9;
  TheoryLevels theory;
};

int cmd_fit(const FitArgs& a) {
  const Matrix x = read_csv_matrix(a.design);
  const Matrix y = read_csv_matrix(a.response);
  if (y.rows() != x.rows()) {
    throw InvalidInput("design has " + std::to_string(x.rows()) + " rows but response has " +
                       std::to_string(y.rows()));
  }
  if (y.cols() > 1 && !a.multi) throw InvalidInput("response has several columns; pass --multi");
  const NormSpec norm = parse_norm(a.norm);
  const double lambda0 = resolve_lambda0(a.lambda0, x.rows(), x.cols(), a.theory);

  const fs::path dir = prepare_out(a.out);
  RunManifest m;
  m.outputs = {(dir / "fit.json").string()};
  ManifestGuard guard(dir, m);

  SolverOptions opts;
  opts.max_iter = a.max_iter;
  opts.fix_tol = a.fix_tol;
  opts.record_objective = true;

  Json doc;
  doc["lambda0"] = lambda0;
  doc["n"] = x.rows();
  doc["p"] = x.cols();
  doc["q"] = y.cols();
  int rc = kExitOk;
  try {
    if (!a.multi && norm.kind == NormKind::L1) {
      const Vector yv = y.col(0);
      const SqrtLassoFit fit = fit_sqrt_lasso(x, yv, lambda0, opts);
      doc["kind"] = "sqrt_lasso";
      doc["converged"] = fit.converged;
      doc["degenerate"] = fit.degenerate;
      doc["iterations"] = fit.iterations;
      doc["k_scale"] = fit.k_scale;
      doc["objective"] = sqrt_lasso_objective(x, yv, fit.beta_hat, lambda0);
      doc["coefficients"] = vector_json(fit.beta_hat);
      doc["sigma_hat"] = fit.sigma_hat;
      if (!fit.degenerate) doc["kkt"] = kkt_json(kkt_check_sqrt(fit, x, yv, opts.kkt_tol));
      doc["iteration_log"] = fit.objective_trace;
      if (fit.degenerate) rc = kExitNumerical;
    } else {
      const MultiFit fit = fit_multi_sqrt_lasso(x, y, lambda0, norm, opts);
      doc["kind"] = "multi_sqrt_lasso";
      doc["converged"] = fit.converged;
      doc["degenerate"] = false;
      doc["iterations"] = fit.iterations;
      doc["k_scale"] = fit.K_scale;
      doc["objective"] = multi_objective(x, y, fit.B_hat, lambda0, norm);
      doc["coefficients"] = matrix_json(fit.B_hat);
      doc["Sigma_hat"] = matrix_json(fit.Sigma_hat);
      if (y.cols() == 1) doc["sigma_hat"] = std::sqrt(fit.Sigma_hat(0, 0));
      doc["kkt"] = kkt_json(kkt_check_multi(fit, x, y, opts.kkt_tol, norm));
      doc["iteration_log"] = fit.objective_trace;
    }
  } catch (const NonConvergence& e) {
    doc["error"] = e.what();
    doc["converged"] = false;
    doc["iterations"] = e.iterations();
    doc["last_iterate"] = matrix_json(e.last_iterate());
    write_json((dir / "fit.json").string(), doc);
    guard.complete();
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DegenerateFit& e) {
    doc["error"] = e.what();
    doc["degenerate"] = true;
    write_json((dir / "fit.json").string(), doc);
    guard.complete();
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  write_json((dir / "fit.json").string(), doc);
  guard.complete();
  return rc;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string design, response, group, lambda = "cv", lambda0 = "theory:3x", null_text, norm, out = ".";
  std::string cv_grid;
  double alpha = 0.05;
  std::optional<std::uint64_t> seed;
  int cv_folds = 5;
  TheoryLevels theory;
};

int cmd_infer(const InferArgs& a) {
  const Matrix x = read_csv_matrix(a.design);
  const Matrix ym = read_csv_matrix(a.response);
  if (ym.cols() != 1) throw InvalidInput("infer expects a single response column");
  if (ym.rows() != x.rows()) throw InvalidInput("design and response row counts differ");
  const Vector y = ym.col(0);
  const IndexSet J = parse_index_list(a.group, "--group");
  if (J.empty()) throw InvalidInput("--group must name at least one column");
  check_index_set(J, x.cols(), "--group");
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw InvalidInput("--alpha must lie in (0, 1)");
  const NormSpec norm = parse_norm(a.norm);
  Vector null_ref = Vector::Zero(static_cast<Index>(J.size()));
  if (!a.null_text.empty()) {
    const auto v = parse_real_list(a.null_text, "--null");
    if (v.size() != J.size()) throw InvalidInput("--null must have one value per group column");
    for (std::size_t i = 0; i < v.size(); ++i) null_ref(static_cast<Index>(i)) = v[i];
  }
  const bool use_cv = a.lambda == "cv";
  if (use_cv && !a.seed) throw InvalidInput("--lambda cv needs --seed (fold assignment is random)");
  const double lambda0 = resolve_lambda0(a.lambda0, x.rows(), x.cols(), a.theory);

  const fs::path dir = prepare_out(a.out);
  RunManifest m;
  m.outputs = {(dir / "infer.json").string()};
  ManifestGuard guard(dir, m);

  SolverOptions opts;
  Json doc;
  doc["J"] = indices_json(J);
  doc["alpha"] = a.alpha;
  doc["lambda0"] = lambda0;

  double lambda = 0.0;
  if (use_cv) {
    const auto grid = a.cv_grid.empty() ? default_cv_grid() : parse_real_list(a.cv_grid, "--cv-grid");
    const CrossValidationResult cv = cross_validate_lambda(x, J, a.cv_folds, grid, *a.seed, opts);
    lambda = cv.lambda;
    doc["cv"] = {{"folds", a.cv_folds}, {"seed", *a.seed}, {"grid", cv.grid}, {"mean_score", cv.mean_score}};
  } else {
    lambda = parse_real(a.lambda, "--lambda");
  }
  doc["lambda"] = lambda;

  const SqrtLassoFit fit = fit_sqrt_lasso(x, y, lambda0, opts);
  if (fit.degenerate) throw DegenerateFit("square-root Lasso residual scale below the floor");
  doc["sigma_hat"] = fit.sigma_hat;
  doc["beta_hat"] = vector_json(fit.beta_hat);
  doc["kkt_sqrt"] = kkt_json(kkt_check_sqrt(fit, x, y, opts.kkt_tol));

  const MultiFit nuisance = fit_nuisance(x, J, lambda, norm, opts);
  const IndexSet rest = complement(J, x.cols());
  doc["kkt_nuisance"] =
      kkt_json(kkt_check_multi(nuisance, select_cols(x, rest), select_cols(x, J), opts.kkt_tol, norm.restricted_to(rest)));
  const GroupInference inf = build_group_inference(x, y, fit.beta_hat, J, nuisance.B_hat, lambda, norm);
  doc["T_tilde"] = matrix_json(inf.T_tilde);
  doc["T_hat"] = matrix_json(inf.T_hat);
  doc["M"] = matrix_json(inf.M);
  doc["normalized_estimate"] = vector_json(inf.normalized_estimate);
  doc["b_hat_J"] = inf.b_hat_J ? vector_json(*inf.b_hat_J) : Json(nullptr);

  const EllipsoidSet set = confidence_set(inf, fit.sigma_hat, a.alpha);
  const double stat = set.statistic(null_ref);
  const double dof = static_cast<double>(J.size());
  doc["null"] = vector_json(null_ref);
  doc["chi2_statistic"] = stat;
  doc["dof"] = J.size();
  doc["p_value"] = chi2_sf(stat, dof);
  doc["quantile"] = set.quantile;
  doc["null_in_set"] = set.contains(null_ref);
  doc["ellipsoid"] = {{"radius_sq", set.radius_sq},
                      {"semi_axes", vector_json(set.semi_axes)},
                      {"axis_directions", matrix_json(set.axis_directions)}};
  write_json((dir / "infer.json").string(), doc);
  guard.complete();
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimArgs {
  std::string config, out = ".", lambdas;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  bool include_cv = false;
};

struct LoadedConfig {
  ExperimentConfig cfg;
  std::string digest;
};

LoadedConfig load_sim_config(const SimArgs& a) {
  std::string raw;
  LoadedConfig lc;
  lc.cfg = load_config(a.config, &raw);
  lc.digest = config_digest(raw);
  if (a.seed) {
    lc.cfg.base_seed = *a.seed;
    lc.cfg.has_seed = true;
  }
  if (!lc.cfg.has_seed) throw InvalidInput("no seed: set base_seed in the config or pass --seed");
  return lc;
}

RunManifest sim_manifest(const SimArgs& a, const LoadedConfig& lc, int threads) {
  RunManifest m;
  m.config_path = a.config;
  m.config_digest = lc.digest;
  m.threads = threads;
  return m;
}

Json context_json(const ExperimentContext& ctx) {
  Json j;
  j["n"] = ctx.config.n;
  j["p"] = ctx.config.p;
  j["J"] = indices_json(ctx.config.J);
  j["S0"] = indices_json(ctx.config.support());
  j["base_seed"] = ctx.config.base_seed;
  j["lambda_srl"] = ctx.lambda_srl;
  j["lambda_msrl"] = ctx.lambda_msrl;
  j["nuisance_kkt_violation"] = ctx.nuisance_kkt;
  j["quantile"] = ctx.quantile;
  j["beta0_J"] = vector_json(select(ctx.beta0, ctx.config.J));
  if (ctx.cv) j["cv"] = {{"grid", ctx.cv->grid}, {"mean_score", ctx.cv->mean_score}, {"lambda", ctx.cv->lambda}};
  return j;
}

void print_summary(const ExperimentSummary& s) {
  std::cout << "coverage " << format_real(s.coverage) << "  used " << s.used << "  excluded " << s.excluded
            << "  mean " << format_real(s.mean_stat) << "  ks " << format_real(s.ks) << "\n";
}

int cmd_histogram(const SimArgs& a) {
  const LoadedConfig lc = load_sim_config(a);
  const int threads = resolve_threads(a.threads);
  const fs::path dir = prepare_out(a.out);
  RunManifest m = sim_manifest(a, lc, threads);
  const std::string records = (dir / "records.csv").string(), summary = (dir / "summary.csv").string(),
                    histogram = (dir / "histogram.csv").string(), report = (dir / "report.json").string();
  m.outputs = {records, summary, histogram, report};
  ManifestGuard guard(dir, m);

  const ExperimentResult res = run_experiment(lc.cfg, threads);
  write_csv(records, records_table(res.records));
  write_csv(summary, summary_table(res.summary));
  write_csv(histogram, histogram_table(res.summary, static_cast<double>(lc.cfg.J.size())));
  write_json(report, context_json(res.context));
  guard.complete();
  print_summary(res.summary);
  return kExitOk;
}

int cmd_sweep(const SimArgs& a) {
  const LoadedConfig lc = load_sim_config(a);
  const int threads = resolve_threads(a.threads);
  std::vector<double> lambdas;
  if (!a.lambdas.empty()) {
    ExperimentConfig tmp = parse_config("lambda_msrl = sweep:" + a.lambdas, "--lambdas");
    lambdas = tmp.lambda_msrl.sweep;
  } else if (lc.cfg.lambda_msrl.kind == MsrlLambdaRule::Kind::Sweep) {
    lambdas = lc.cfg.lambda_msrl.sweep;
  } else {
    throw InvalidInput("lambda-sweep needs lambda_msrl = sweep:... in the config or --lambdas");
  }
  const fs::path dir = prepare_out(a.out);
  RunManifest m = sim_manifest(a, lc, threads);
  const std::string out = (dir / "sweep.csv").string();
  m.outputs = {out};
  ManifestGuard guard(dir, m);

  std::vector<SweepPoint> points = run_lambda_sweep(lc.cfg, lambdas, threads);
  std::vector<std::string> source(points.size(), "grid");
  if (a.include_cv) {
    ExperimentConfig c = lc.cfg;
    c.lambda_msrl.kind = MsrlLambdaRule::Kind::CrossValidation;
    SweepPoint pt;
    try {
      const ExperimentResult r = run_experiment(c, threads);
      pt.lambda = r.context.lambda_msrl;
      pt.summary = r.summary;
    } catch (const NumericalError& e) {
      pt.error = e.what();
    }
    points.push_back(pt);
    source.push_back("cv");
  }
  CsvTable t;
  t.header = {"lambda", "source", "coverage", "used", "excluded", "mean_stat", "ks", "error"};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    t.rows.push_back({format_real(pt.lambda), source[i], format_real(pt.error.empty() ? pt.summary.coverage : NAN),
                      std::to_string(pt.summary.used), std::to_string(pt.summary.excluded),
                      format_real(pt.error.empty() ? pt.summary.mean_stat : NAN),
                      format_real(pt.error.empty() ? pt.summary.ks : NAN), pt.error});
  }
  write_csv(out, t);
  guard.complete();
  return kExitOk;
}

int cmd_levelplot(const SimArgs& a) {
  const LoadedConfig lc = load_sim_config(a);
  const int threads = resolve_threads(a.threads);
  const fs::path dir = prepare_out(a.out);
  RunManifest m = sim_manifest(a, lc, threads);
  const std::string out = (dir / "levelplot.csv").string();
  m.outputs = {out};
  ManifestGuard guard(dir, m);

  const std::vector<LevelCell> cells = run_levelplot(lc.cfg, threads);
  CsvTable t;
  // regime marks the n = p border between the low- and high-dimensional cells
  t.header = {"n", "p", "regime", "coverage", "used", "excluded", "mean_stat", "ks", "lambda_srl", "lambda_msrl", "error"};
  for (const auto& c : cells) {
    const char* regime = c.p < c.n ? "low" : (c.p == c.n ? "border" : "high");
    const bool ok = c.error.empty();
    t.rows.push_back({std::to_string(c.n), std::to_string(c.p), regime, format_real(ok ? c.summary.coverage : NAN),
                      std::to_string(c.summary.used), std::to_string(c.summary.excluded),
                      format_real(ok ? c.summary.mean_stat : NAN), format_real(ok ? c.summary.ks : NAN),
                      format_real(ok ? c.summary.lambda_srl : NAN), format_real(ok ? c.summary.lambda_msrl : NAN),
                      c.error});
  }
  write_csv(out, t);
  guard.complete();
  return kExitOk;
}

int cmd_verify(const SimArgs& a) {
  const LoadedConfig lc = load_sim_config(a);
  const int threads = resolve_threads(a.threads);
  const fs::path dir = prepare_out(a.out);
  RunManifest m = sim_manifest(a, lc, threads);
  const std::string report = (dir / "verify.json").string();
  m.outputs = {report};
  ManifestGuard guard(dir, m);

  const VerifyReport v = run_verification(lc.cfg, threads);
  Json j;
  j["passed"] = v.passed();
  j["replications"] = v.draws;
  j["pivot_identity"] = {{"checked", v.theorem1_checked},
                         {"failures", v.theorem1_failures},
                         {"max_reconstruction_residual", v.max_reconstruction_residual}};
  j["oracle_inequality"] = {{"available", v.oracle_available},
                            {"applicable", v.oracle_applicable},
                            {"failures", v.oracle_failures}};
  auto tail = [&](double freq, double level, bool ok) {
    const double se = std::sqrt(level * (1.0 - level) / std::max(v.draws, 1));
    return Json{{"frequency", freq}, {"level", level}, {"limit", level + 3.0 * se}, {"ok", ok}};
  };
  j["gaussian_tails"] = {{"sigma_lower", v.bounds.sigma_lower()},
                         {"sigma_upper", v.bounds.sigma_upper()},
                         {"R", v.bounds.R},
                         {"low_noise", tail(v.freq_low, v.bounds.alpha_lower, v.low_ok)},
                         {"high_noise", tail(v.freq_high, v.bounds.alpha_upper, v.high_ok)},
                         {"correlation_or_low", tail(v.freq_union, v.bounds.alpha0 + v.bounds.alpha_lower, v.union_ok)}};
  Json fails = Json::array();
  for (const auto& f : v.failures) fails.push_back({{"rep_index", f.rep_index}, {"seed_used", f.seed_used}, {"what", f.what}});
  j["failures"] = fails;
  j["summary"] = {{"coverage", v.summary.coverage}, {"used", v.summary.used}, {"excluded", v.summary.excluded}};
  write_json(report, j);
  guard.complete();
  if (!v.passed()) {
    for (const auto& f : v.failures) {
      std::cerr << "assertion failed in replication " << f.rep_index << " (noise seed " << f.seed_used
                << "): " << f.what << "\n";
    }
    if (!v.low_ok || !v.high_ok || !v.union_ok) std::cerr << "Gaussian tail frequency above its limit\n";
    return kExitVerify;
  }
  std::cout << "verify passed: " << v.theorem1_checked << " pivot checks, " << v.oracle_applicable
            << " oracle checks\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"chi2 confidence sets for groups of coefficients via the square-root Lasso"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "square-root Lasso or its multivariate version");
  fit->add_option("--design", fa.design, "design CSV (n x p)")->required();
  fit->add_option("--response", fa.response, "response CSV (n x 1, or n x q with --multi)")->required();
  fit->add_option("--lambda0", fa.lambda0, "tuning level: a number or theory:<m>x")->required();
  fit->add_flag("--multi", fa.multi, "nuclear-norm loss for a matrix response");
  fit->add_option("--norm", fa.norm, "l1 (default) or group:<i,j;k,...> with 1-based columns");
  fit->add_option("--max-iter", fa.max_iter)->capture_default_str();
  fit->add_option("--fix-tol", fa.fix_tol)->capture_default_str();
  fit->add_option("--out", fa.out, "output directory")->capture_default_str();
  add_theory_flags(fit, fa.theory);

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "confidence set for a group of coefficients");
  infer->add_option("--design", ia.design)->required();
  infer->add_option("--response", ia.response)->required();
  infer->add_option("--group", ia.group, "1-based column list, e.g. 1,3,4")->required();
  infer->add_option("--lambda", ia.lambda, "nuisance level: a number or cv")->capture_default_str();
  infer->add_option("--lambda0", ia.lambda0, "square-root Lasso level: a number or theory:<m>x")
      ->capture_default_str();
  infer->add_option("--alpha", ia.alpha)->capture_default_str();
  infer->add_option("--null", ia.null_text, "hypothesized group values (default 0)");
  infer->add_option("--norm", ia.norm, "nuisance penalty: l1 or group:<...>");
  infer->add_option("--seed", ia.seed, "seed for cross-validation folds");
  infer->add_option("--cv-folds", ia.cv_folds)->capture_default_str();
  infer->add_option("--cv-grid", ia.cv_grid, "comma list (default: 30 log-spaced points on [0.01, 3])");
  infer->add_option("--out", ia.out)->capture_default_str();
  add_theory_flags(infer, ia.theory);

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo experiments");
  sim->require_subcommand(1);
  std::string which;
  for (const char* name : {"histogram", "lambda-sweep", "levelplot", "verify"}) {
    auto* sub = sim->add_subcommand(name);
    sub->add_option("--config", sa.config, "experiment config file")->required();
    sub->add_option("--out", sa.out)->capture_default_str();
    sub->add_option("--threads", sa.threads, "worker threads (fallback: CHI2SETS_THREADS, then all cores)");
    sub->add_option("--seed", sa.seed, "overrides base_seed");
    if (std::string(name) == "lambda-sweep") {
      sub->add_option("--lambdas", sa.lambdas, "comma list or start:stop:step");
      sub->add_flag("--include-cv", sa.include_cv, "add the cross-validated level as an extra row");
    }
    sub->callback([&which, name] { which = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (fit->parsed()) return cmd_fit(fa);
    if (infer->parsed()) return cmd_infer(ia);
    if (which == "histogram") return cmd_histogram(sa);
    if (which == "lambda-sweep") return cmd_sweep(sa);
    if (which == "levelplot") return cmd_levelplot(sa);
    if (which == "verify") return cmd_verify(sa);
  } catch (const InvalidInput& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const SingularMatrix& e) {
    std::cerr << "numerical error: " << e.what() << " (condition " << e.condition() << ")\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConsistencyError& e) {
    std::cerr << "consistency error: " << e.what() << "\n";
    return kExitVerify;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}
