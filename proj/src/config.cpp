#include "chi2sets/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "chi2sets/error.hpp"

namespace chi2sets {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_reals(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

std::string join_indices(const IndexSet& v, Index offset) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i] + offset);
  return s;
}

bool parse_bool(std::string_view v, std::string_view what) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput(std::string(what) + ": expected true/false, got '" + std::string(v) + "'");
}

// "a,b,c" or "start:stop:step" (inclusive, computed as start + i·step)
std::vector<double> parse_real_list_or_range(std::string_view v, std::string_view what) {
  if (v.find(':') != std::string_view::npos) {
    const auto parts = split(v, ':');
    if (parts.size() != 3) throw InvalidInput(std::string(what) + ": range must be start:stop:step");
    const double a = parse_real(parts[0], what);
    const double b = parse_real(parts[1], what);
    const double h = parse_real(parts[2], what);
    if (!(h > 0.0) || !(b >= a)) throw InvalidInput(std::string(what) + ": range needs step > 0 and stop >= start");
    std::vector<double> out;
    for (long i = 0;; ++i) {
      const double x = a + static_cast<double>(i) * h;
      if (x > b + 1e-9 * h) break;
      out.push_back(x);
      if (out.size() > 100000) throw InvalidInput(std::string(what) + ": range too long");
    }
    return out;
  }
  return parse_real_list(v, what);
}

}  // namespace

double parse_real(std::string_view text, std::string_view what) {
  const std::string s(trim(text));
  if (s.empty()) throw InvalidInput(std::string(what) + ": empty number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
    throw InvalidInput(std::string(what) + ": not a finite number: '" + s + "'");
  }
  return v;
}

long long parse_integer(std::string_view text, std::string_view what) {
  const std::string s(trim(text));
  if (s.empty()) throw InvalidInput(std::string(what) + ": empty integer");
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw InvalidInput(std::string(what) + ": not an integer: '" + s + "'");
  }
  return v;
}

std::vector<double> parse_real_list(std::string_view text, std::string_view what) {
  std::vector<double> out;
  for (auto part : split(text, ',')) out.push_back(parse_real(part, what));
  return out;
}

IndexSet parse_index_list(std::string_view text, std::string_view what) {
  IndexSet out;
  if (trim(text).empty()) return out;
  for (auto part : split(text, ',')) {
    const long long v = parse_integer(part, what);
    if (v < 1) throw InvalidInput(std::string(what) + ": indices are 1-based, got " + std::to_string(v));
    out.push_back(static_cast<Index>(v - 1));
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    throw InvalidInput(std::string(what) + ": duplicate index");
  }
  return out;
}

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
  ExperimentConfig cfg;
  std::map<std::string, int> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw InvalidInput(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view val = trim(line.substr(eq + 1));
    if (seen.count(key)) {
      throw InvalidInput(where + ": key '" + key + "' repeated (first on line " + std::to_string(seen[key]) + ")");
    }
    seen[key] = line_no;
    const std::string what = where + " " + key;

    if (key == "n") {
      cfg.n = static_cast<Index>(parse_integer(val, what));
    } else if (key == "p") {
      cfg.p = static_cast<Index>(parse_integer(val, what));
    } else if (key == "J") {
      cfg.J = parse_index_list(val, what);
    } else if (key == "S0") {
      if (val == "J") cfg.S0.reset();
      else cfg.S0 = parse_index_list(val, what);
    } else if (key == "signal_range") {
      const auto r = parse_real_list(val, what);
      if (r.size() != 2) throw InvalidInput(what + ": expected lo,hi");
      cfg.signal_lo = r[0];
      cfg.signal_hi = r[1];
    } else if (key == "rho") {
      cfg.rho = parse_real(val, what);
    } else if (key == "sigma0") {
      cfg.sigma0 = parse_real(val, what);
    } else if (key == "replications") {
      cfg.replications = static_cast<int>(parse_integer(val, what));
    } else if (key == "alpha") {
      cfg.alpha = parse_real(val, what);
    } else if (key == "lambda_srl") {
      if (val.substr(0, 7) == "theory:") {
        std::string_view m = val.substr(7);
        if (!m.empty() && m.back() == 'x') m.remove_suffix(1);
        cfg.lambda_srl.kind = SrlLambdaRule::Kind::TheoryMultiple;
        cfg.lambda_srl.value = parse_real(m, what);
      } else if (val == "theory") {
        cfg.lambda_srl.kind = SrlLambdaRule::Kind::TheoryMultiple;
        cfg.lambda_srl.value = 1.0;
      } else {
        cfg.lambda_srl.kind = SrlLambdaRule::Kind::Explicit;
        cfg.lambda_srl.value = parse_real(val, what);
      }
    } else if (key == "theory_alpha0") {
      cfg.lambda_srl.alpha0 = parse_real(val, what);
    } else if (key == "theory_alpha_lower") {
      cfg.lambda_srl.alpha_lower = parse_real(val, what);
    } else if (key == "theory_eta") {
      cfg.lambda_srl.eta = parse_real(val, what);
    } else if (key == "theory_alpha_upper") {
      cfg.theory_alpha_upper = parse_real(val, what);
    } else if (key == "theory_delta") {
      cfg.theory_delta = parse_real(val, what);
    } else if (key == "lambda_msrl") {
      if (val == "cv") {
        cfg.lambda_msrl.kind = MsrlLambdaRule::Kind::CrossValidation;
      } else if (val.substr(0, 6) == "sweep:") {
        cfg.lambda_msrl.kind = MsrlLambdaRule::Kind::Sweep;
        cfg.lambda_msrl.sweep = parse_real_list_or_range(val.substr(6), what);
      } else {
        cfg.lambda_msrl.kind = MsrlLambdaRule::Kind::Explicit;
        cfg.lambda_msrl.value = parse_real(val, what);
      }
    } else if (key == "cv_folds") {
      cfg.cv_folds = static_cast<int>(parse_integer(val, what));
    } else if (key == "cv_grid") {
      if (val == "default") cfg.cv_grid.clear();
      else cfg.cv_grid = parse_real_list_or_range(val, what);
    } else if (key == "base_seed") {
      const std::string s(val);
      char* end = nullptr;
      errno = 0;
      const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
      if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE) {
        throw InvalidInput(what + ": expected an unsigned 64-bit integer");
      }
      cfg.base_seed = v;
      cfg.has_seed = true;
    } else if (key == "verify") {
      cfg.verify = parse_bool(val, what);
    } else if (key == "levelplot_n" || key == "levelplot_p") {
      std::vector<Index> v;
      for (auto part : split(val, ',')) {
        const long long x = parse_integer(part, what);
        if (x < 2) throw InvalidInput(what + ": grid values must be >= 2");
        v.push_back(static_cast<Index>(x));
      }
      (key == "levelplot_n" ? cfg.levelplot_n : cfg.levelplot_p) = std::move(v);
    } else if (key == "max_iter") {
      cfg.solver.max_iter = static_cast<int>(parse_integer(val, what));
    } else if (key == "fix_tol") {
      cfg.solver.fix_tol = parse_real(val, what);
    } else if (key == "kkt_tol") {
      cfg.solver.kkt_tol = parse_real(val, what);
    } else {
      throw InvalidInput(where + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, std::string* raw) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  ExperimentConfig cfg = parse_config(text, path);
  if (raw) *raw = text;
  return cfg;
}

std::string config_digest(std::string_view raw) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : raw) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream o;
  o << "n = " << cfg.n << "\n";
  o << "p = " << cfg.p << "\n";
  o << "J = " << join_indices(cfg.J, 1) << "\n";
  o << "S0 = " << (cfg.S0 ? join_indices(*cfg.S0, 1) : std::string("J")) << "\n";
  o << "signal_range = " << fmt(cfg.signal_lo) << "," << fmt(cfg.signal_hi) << "\n";
  o << "rho = " << fmt(cfg.rho) << "\n";
  o << "sigma0 = " << fmt(cfg.sigma0) << "\n";
  o << "replications = " << cfg.replications << "\n";
  o << "alpha = " << fmt(cfg.alpha) << "\n";
  if (cfg.lambda_srl.kind == SrlLambdaRule::Kind::TheoryMultiple) {
    o << "lambda_srl = theory:" << fmt(cfg.lambda_srl.value) << "x\n";
  } else {
    o << "lambda_srl = " << fmt(cfg.lambda_srl.value) << "\n";
  }
  o << "theory_alpha0 = " << fmt(cfg.lambda_srl.alpha0) << "\n";
  o << "theory_alpha_lower = " << fmt(cfg.lambda_srl.alpha_lower) << "\n";
  o << "theory_eta = " << fmt(cfg.lambda_srl.eta) << "\n";
  o << "theory_alpha_upper = " << fmt(cfg.theory_alpha_upper) << "\n";
  o << "theory_delta = " << fmt(cfg.theory_delta) << "\n";
  switch (cfg.lambda_msrl.kind) {
    case MsrlLambdaRule::Kind::CrossValidation: o << "lambda_msrl = cv\n"; break;
    case MsrlLambdaRule::Kind::Explicit: o << "lambda_msrl = " << fmt(cfg.lambda_msrl.value) << "\n"; break;
    case MsrlLambdaRule::Kind::Sweep: o << "lambda_msrl = sweep:" << join_reals(cfg.lambda_msrl.sweep) << "\n"; break;
  }
  o << "cv_folds = " << cfg.cv_folds << "\n";
  o << "cv_grid = " << (cfg.cv_grid.empty() ? std::string("default") : join_reals(cfg.cv_grid)) << "\n";
  if (cfg.has_seed) o << "base_seed = " << cfg.base_seed << "\n";
  o << "verify = " << (cfg.verify ? "true" : "false") << "\n";
  auto ints = [](const std::vector<Index>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  if (!cfg.levelplot_n.empty()) o << "levelplot_n = " << ints(cfg.levelplot_n) << "\n";
  if (!cfg.levelplot_p.empty()) o << "levelplot_p = " << ints(cfg.levelplot_p) << "\n";
  o << "max_iter = " << cfg.solver.max_iter << "\n";
  o << "fix_tol = " << fmt(cfg.solver.fix_tol) << "\n";
  o << "kkt_tol = " << fmt(cfg.solver.kkt_tol) << "\n";
  return o.str();
}

}  // namespace chi2sets
