#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sas {

// Performance-parameter trade-off: (top1/100) * exp(-log10(1 + P/1e7)).
// Reproduces the published PETL comparison columns within +/-0.002.
double ppt_score(double top1_percent, std::uint64_t adapter_params);

struct RunResult {
    std::string variant;
    std::uint64_t adapter_params = 0;
    double top1 = 0.0;
    double ppt = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    double wall_time = 0.0;  // seconds; excluded from determinism comparisons
};

// Field-wise equality ignoring wall_time, which is measured and therefore
// not reproducible across runs.
bool same_outcome(const RunResult& a, const RunResult& b);

// Writes a CSV table plus a line-delimited JSON log next to it
// (<path>.jsonl, or .csv swapped for .jsonl). Numeric fields use
// shortest-round-trip formatting so parsing the file reproduces them exactly.
void emit_results(const std::vector<RunResult>& results, const std::string& path);

std::vector<RunResult> parse_results_csv(const std::string& path);

// Shortest decimal form that round-trips the exact double.
std::string format_double(double v);

std::uint64_t fnv1a(std::string_view s);
std::string hash_hex(std::string_view s);

}  // namespace sas
