#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

namespace coagfrag::cli {

enum ExitCode : int {
  kOk = 0,
  kValidationFailure = 2,
  kRuntimeAbort = 3,
  kCheckFailure = 4,
};

struct Options {
  std::filesystem::path config;
  /// Overrides experiment.output from the config.
  std::filesystem::path out;
  unsigned threads = 1;
  std::optional<double> snapshot_every;
  /// Run directories for `check`.
  std::vector<std::filesystem::path> runs;
};

int cmd_validate(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_run(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_check(const Options& opt, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a subcommand.
int main(int argc, char** argv);

}  // namespace coagfrag::cli
