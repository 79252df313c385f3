#pragma once

// Configuration files, time-series CSV and state snapshots.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coagfrag/integrator.hpp"

namespace coagfrag {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Single, JSweep, RhoSweep, ConvergenceStudy };
std::string to_string(ExperimentKind k);

struct ExperimentConfig {
  RunConfig run;
  ExperimentKind kind = ExperimentKind::Single;
  std::vector<double> j_list;
  std::vector<double> rho_list;
  std::vector<double> cells_per_decade_list;
  std::filesystem::path output_dir;
  /// Reserved; the solver is deterministic.
  std::uint64_t seed = 0;
};

/// INI-style text: [section] headers and key = value lines. Relative paths
/// (initial.file, experiment.output) resolve against `base_dir`.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Config text that parses back to the same experiment (paths made absolute).
std::string format_config(const ExperimentConfig& cfg);

/// Column order of the time-series CSV.
const std::vector<std::string>& csv_columns();

void write_csv(std::ostream& out, const TimeSeries& ts);

/// Rows of a time-series CSV.
struct CsvRow {
  double t, M_m0, M_m1, M_1, M_lambda, M_high, log_mass, lyapunov, cum_trunc_loss, dt;
  std::size_t steps;
};
std::vector<CsvRow> read_csv(std::istream& in);

void write_snapshot(std::ostream& out, const State& state);
State read_snapshot(std::istream& in);

/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Rebuilds a TimeSeries from CSV rows and the exponents they refer to.
TimeSeries time_series_from_csv(const std::vector<CsvRow>& rows, const TrackedExponents& e);

}  // namespace coagfrag
