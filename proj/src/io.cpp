#include "chi2sets/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include "chi2sets/error.hpp"
#include "chi2sets/special.hpp"

namespace chi2sets {

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
  out.flush();
  if (!out) throw InvalidInput("write failed for '" + path + "'");
}

bool try_real(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE;
}

std::string quote(const std::string& f) {
  if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
  std::string q = "\"";
  for (char c : f) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw InvalidInput("CSV has no column '" + name + "'");
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  int line = 1;
  int row_line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    // blank lines are skipped
    if (!(row.size() == 1 && row[0].empty())) {
      if (!rows.empty() && row.size() != rows.front().size()) {
        throw InvalidInput(origin + ":" + std::to_string(row_line) + ": expected " +
                           std::to_string(rows.front().size()) + " fields, found " + std::to_string(row.size()));
      }
      rows.push_back(std::move(row));
    }
    row.clear();
    row_line = line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      ++line;
      end_row();
    } else if (c == '\r') {
      // tolerate CRLF
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw InvalidInput(origin + ":" + std::to_string(row_line) + ": unterminated quoted field");
  if (!field.empty() || !row.empty()) end_row();
  if (rows.empty()) throw InvalidInput(origin + ": empty CSV");
  CsvTable t;
  t.header = std::move(rows.front());
  t.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
  return t;
}

CsvTable read_csv(const std::string& path) { return parse_csv(slurp(path), path); }

std::string render_csv(const CsvTable& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += quote(r[i]);
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out;
}

void write_csv(const std::string& path, const CsvTable& table) { spit(path, render_csv(table)); }

Matrix read_csv_matrix(const std::string& path, std::vector<std::string>* header) {
  CsvTable t = read_csv(path);
  double v = 0.0;
  bool header_numeric = true;
  for (const auto& f : t.header) header_numeric = header_numeric && try_real(f, v);
  // line numbers: the header (or first data row) is line 1
  int first_line = 2;
  if (header_numeric) {
    t.rows.insert(t.rows.begin(), t.header);
    t.header.clear();
    first_line = 1;
  }
  if (t.rows.empty()) throw InvalidInput(path + ": no data rows");
  const Index rows = static_cast<Index>(t.rows.size());
  const Index cols = static_cast<Index>(t.rows.front().size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const std::string& f = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (!try_real(f, v) || !std::isfinite(v)) {
        throw InvalidInput(path + ": row " + std::to_string(i + first_line) + ", column " + std::to_string(j + 1) +
                           ": not a finite number: '" + f + "'");
      }
      m(i, j) = v;
    }
  }
  if (header) *header = t.header;
  return m;
}

void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header) {
  if (!header.empty() && static_cast<Index>(header.size()) != m.cols()) {
    throw InvalidInput("write_matrix_csv: header size mismatch");
  }
  CsvTable t;
  t.header = header;
  for (Index j = 0; header.empty() && j < m.cols(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> r;
    for (Index j = 0; j < m.cols(); ++j) r.push_back(format_real(m(i, j)));
    t.rows.push_back(std::move(r));
  }
  write_csv(path, t);
}

void write_json(const std::string& path, const Json& doc) { spit(path, doc.dump(2) + "\n"); }

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

Json RunManifest::to_json() const {
  Json j;
  j["command_line"] = command_line;
  j["config_path"] = config_path;
  j["config_digest"] = config_digest;
  j["artifact_version"] = artifact_version;
  j["rng_algorithm"] = rng_algorithm;
  j["start_time"] = start_time;
  j["end_time"] = end_time.empty() ? Json(nullptr) : Json(end_time);
  j["status"] = status;
  j["threads"] = threads;
  j["outputs"] = outputs;
  return j;
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::string& path, const RunManifest& m) { write_json(path, m.to_json()); }

CsvTable records_table(const std::vector<ReplicationRecord>& records) {
  CsvTable t;
  t.header = {"rep_index", "chi2_stat", "covered", "sigma_hat", "rem_linf_bound", "kkt_sqrt", "kkt_nuisance",
              "seed_used", "reconstruction_residual", "rem_linf", "eps_norm", "r_hat", "r_hat_normalized",
              "oracle_applicable", "oracle_holds", "oracle_lhs", "oracle_rhs", "assertion_failed", "error"};
  for (const auto& r : records) {
    t.rows.push_back({std::to_string(r.rep_index), format_real(r.chi2_stat), r.covered ? "1" : "0",
                      format_real(r.sigma_hat), format_real(r.rem_linf_bound), format_real(r.kkt_sqrt),
                      format_real(r.kkt_nuisance), std::to_string(r.seed_used),
                      format_real(r.reconstruction_residual), format_real(r.rem_linf), format_real(r.eps_norm),
                      format_real(r.r_hat), format_real(r.r_hat_normalized), r.oracle_applicable ? "1" : "0",
                      r.oracle_holds ? "1" : "0", format_real(r.oracle_lhs), format_real(r.oracle_rhs),
                      r.assertion_failed ? "1" : "0", r.error});
  }
  return t;
}

std::vector<ReplicationRecord> records_from_table(const CsvTable& t) {
  auto real = [](const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    if (!try_real(s, v)) throw InvalidInput("records CSV: bad number '" + s + "'");
    return v;
  };
  const auto c_rep = t.column("rep_index"), c_stat = t.column("chi2_stat"), c_cov = t.column("covered"),
             c_sig = t.column("sigma_hat"), c_bound = t.column("rem_linf_bound"), c_ks = t.column("kkt_sqrt"),
             c_kn = t.column("kkt_nuisance"), c_seed = t.column("seed_used"),
             c_rec = t.column("reconstruction_residual"), c_rem = t.column("rem_linf"),
             c_en = t.column("eps_norm"), c_rh = t.column("r_hat"), c_rhn = t.column("r_hat_normalized"),
             c_oa = t.column("oracle_applicable"), c_oh = t.column("oracle_holds"), c_ol = t.column("oracle_lhs"),
             c_or = t.column("oracle_rhs"), c_af = t.column("assertion_failed"), c_err = t.column("error");
  std::vector<ReplicationRecord> out;
  for (const auto& row : t.rows) {
    ReplicationRecord r;
    r.rep_index = std::stoi(row[c_rep]);
    r.chi2_stat = real(row[c_stat]);
    r.covered = row[c_cov] == "1";
    r.sigma_hat = real(row[c_sig]);
    r.rem_linf_bound = real(row[c_bound]);
    r.kkt_sqrt = real(row[c_ks]);
    r.kkt_nuisance = real(row[c_kn]);
    r.seed_used = std::stoull(row[c_seed]);
    r.reconstruction_residual = real(row[c_rec]);
    r.rem_linf = real(row[c_rem]);
    r.eps_norm = real(row[c_en]);
    r.r_hat = real(row[c_rh]);
    r.r_hat_normalized = real(row[c_rhn]);
    r.oracle_applicable = row[c_oa] == "1";
    r.oracle_holds = row[c_oh] == "1";
    r.oracle_lhs = real(row[c_ol]);
    r.oracle_rhs = real(row[c_or]);
    r.assertion_failed = row[c_af] == "1";
    r.error = row[c_err];
    out.push_back(std::move(r));
  }
  return out;
}

CsvTable summary_table(const ExperimentSummary& s) {
  CsvTable t;
  t.header = {"replications", "used", "excluded", "assertion_failures", "coverage", "mean_stat",
              "ks",           "quantile", "lambda_srl", "lambda_msrl"};
  t.rows.push_back({std::to_string(s.replications), std::to_string(s.used), std::to_string(s.excluded),
                    std::to_string(s.assertion_failures), format_real(s.coverage), format_real(s.mean_stat),
                    format_real(s.ks), format_real(s.quantile), format_real(s.lambda_srl),
                    format_real(s.lambda_msrl)});
  return t;
}

CsvTable histogram_table(const ExperimentSummary& s, double dof) {
  CsvTable t;
  t.header = {"bin_lo", "bin_hi", "count", "chi2_density", "expected_count"};
  for (std::size_t k = 0; k < s.histogram.size(); ++k) {
    const double lo = static_cast<double>(k);
    const bool overflow = k + 1 == s.histogram.size();
    const double hi = overflow ? std::numeric_limits<double>::infinity() : lo + 1.0;
    const double mass = overflow ? chi2_sf(lo, dof) : chi2_cdf(hi, dof) - chi2_cdf(lo, dof);
    const double density = overflow ? chi2_pdf(lo, dof) : chi2_pdf(lo + 0.5, dof);
    t.rows.push_back({format_real(lo), format_real(hi), std::to_string(s.histogram[k]), format_real(density),
                      format_real(mass * s.used)});
  }
  return t;
}

}  // namespace chi2sets
