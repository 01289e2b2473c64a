#pragma once

// Subcommand drivers shared by the C API and the command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pcp {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct CommandOptions {
  std::string command;  // simulate, hyperopt, fit, estimate, test-intersection, test-sorted, importance, report
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> learner;
  std::optional<std::string> statistic;  // covariance or correlation
};

struct CommandResult {
  std::filesystem::path output_dir;
  std::vector<std::string> files;  // relative to output_dir, sorted, manifest included
  std::string summary;
};

const std::vector<std::string>& command_names();

/// Runs one subcommand. On failure every file it wrote is removed and the
/// error is rethrown.
CommandResult run_command(const CommandOptions& options);

}  // namespace pcp
