#pragma once

#include <string>
#include <string_view>

#include "chi2sets/simulate.hpp"

namespace chi2sets {

/// Parses the `key = value` experiment format (one entry per line, `#` starts
/// a comment). Index lists are 1-based in the file and 0-based in memory.
/// Unknown or repeated keys are errors; `origin` prefixes diagnostics.
ExperimentConfig parse_config(std::string_view text, std::string_view origin = "config");

/// Reads and parses a file; the raw bytes are returned in `raw` when given.
ExperimentConfig load_config(const std::string& path, std::string* raw = nullptr);

/// 64-bit FNV-1a of the raw config bytes, as 16 hex digits.
std::string config_digest(std::string_view raw);

/// Canonical `key = value` rendering; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& cfg);

/// "1,3,4" → {0,2,3}; rejects zero, negatives, duplicates and junk.
IndexSet parse_index_list(std::string_view text, std::string_view what);
std::vector<double> parse_real_list(std::string_view text, std::string_view what);
double parse_real(std::string_view text, std::string_view what);
long long parse_integer(std::string_view text, std::string_view what);

}  // namespace chi2sets
