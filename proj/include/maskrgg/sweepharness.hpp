#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskrgg/divergenceoracle.hpp"
#include "maskrgg/signedstats.hpp"

namespace maskrgg {

/// Library version string.
std::string_view version();

/// Grid experiment over (d, q) for fixed (n, m, p).
///
/// JSON fields: n, m, p, one of d_values / d_exponents (d = round(n^a)),
/// one of q_values / q_exponents (q = n^-b), statistics (registry names),
/// mask_mode ("unknown" or "known"), trials (alternative draws per cell),
/// null_trials (>= 100 / alpha), alpha, seed, output (optional).
struct SweepConfig {
  int n = 100;
  int m = 100;
  double p = 0.3;
  std::vector<int> d_values;
  std::vector<double> d_exponents;
  std::vector<double> q_values;
  std::vector<double> q_exponents;
  std::vector<std::string> statistics{"c4"};
  MaskMode mask_mode = MaskMode::kUnknown;
  int trials = 200;
  int null_trials = 2000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string output;

  /// Grids after expanding exponent forms; explicit lists win.
  [[nodiscard]] std::vector<int> d_grid() const;
  [[nodiscard]] std::vector<double> q_grid() const;

  /// Throws std::invalid_argument for empty grids, out-of-range values,
  /// unknown statistic names, masked statistics under mask_mode "unknown",
  /// or null_trials < 100 / alpha.
  void validate() const;
};

SweepConfig sweep_config_from_json(const nlohmann::json& json);
SweepConfig load_sweep_config(const std::filesystem::path& path);
nlohmann::json to_json(const SweepConfig& config);

struct SweepCell {
  int d = 0;
  double q = 0.0;
  std::string statistic;
  double power = 0.0;
  double power_se = 0.0;
  double null_lo = 0.0;
  double null_hi = 0.0;
  double h1_mean = 0.0;
  std::uint64_t seed = 0;  // key of the cell's alternative stream
};

struct SweepResult {
  SweepConfig config;
  std::vector<SweepCell> cells;
  std::string version;
  double wall_seconds = 0.0;  // only written to the sidecar
};

/// For each (d, q) cell: calibrate tau, draw `trials` alternative samples on
/// the stream seed.child(1).child(cell) and evaluate every statistic on the
/// same draws. Null intervals come from seed.child(0).child(statistic),
/// further split by q-index for masked statistics, and are shared by all
/// cells with the same key. Output does not depend on `threads`.
SweepResult run_sweep(const SweepConfig& config, unsigned threads = 1);

/// CSV header: d,q,stat,power,power_se,null_lo,null_hi,h1_mean,seed.
inline constexpr std::string_view kSweepCsvHeader =
    "d,q,stat,power,power_se,null_lo,null_hi,h1_mean,seed";

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);
std::vector<SweepCell> read_sweep_csv(std::istream& in);

/// Results as JSON: {"version", "config", "cells"}. No timings, so equal
/// inputs give byte-identical text.
nlohmann::json results_json(const SweepResult& result);
SweepResult results_from_json(const nlohmann::json& json);

/// Sidecar metadata: config echo, version, wall time.
nlohmann::json sidecar_json(const SweepResult& result);

enum class OutputFormat { kCsv, kJson };

OutputFormat parse_output_format(std::string_view name);

/// Writes the results file and `<path>.meta.json` next to it.
void write_sweep_outputs(const std::filesystem::path& path, const SweepResult& result,
                         OutputFormat format);

}  // namespace maskrgg
