#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "chi2sets/linalg.hpp"
#include "chi2sets/simulate.hpp"

namespace chi2sets {

using Json = nlohmann::ordered_json;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws InvalidInput when absent.
  std::size_t column(const std::string& name) const;
};

/// "%.17g"; non-finite values print as nan, inf, -inf.
std::string format_real(double v);

/// Comma-separated, double quotes for fields containing , " or newlines.
/// The first row is always the header.
CsvTable parse_csv(const std::string& text, const std::string& origin);
CsvTable read_csv(const std::string& path);
std::string render_csv(const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);

/// Numeric matrix from a CSV file. The first row is a header unless every
/// field in it parses as a number. Errors name the file, line and column.
Matrix read_csv_matrix(const std::string& path, std::vector<std::string>* header = nullptr);
/// An empty header writes x1..xp.
void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header);

void write_json(const std::string& path, const Json& doc);
Json matrix_json(const Matrix& m);
Json vector_json(const Vector& v);

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Provenance record written before any output and finalized after.
struct RunManifest {
  std::string command_line;
  std::string config_path;
  std::string config_digest;
  std::string artifact_version = kArtifactVersion;
  std::string rng_algorithm;
  std::string start_time;
  std::string end_time;
  /// running, complete or failed
  std::string status = "running";
  int threads = 0;
  std::vector<std::string> outputs;

  Json to_json() const;
};

/// UTC, ISO 8601 with seconds.
std::string utc_timestamp();
void write_manifest(const std::string& path, const RunManifest& m);

CsvTable records_table(const std::vector<ReplicationRecord>& records);
std::vector<ReplicationRecord> records_from_table(const CsvTable& table);
CsvTable summary_table(const ExperimentSummary& s);
/// Bins [k, k+1) for k < 40 plus [40, inf), with the χ²_dof density at the
/// bin midpoint and the expected count under χ²_dof.
CsvTable histogram_table(const ExperimentSummary& s, double dof);

}  // namespace chi2sets
