// Command-line front end over the C API.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pcp/pcp.h"

namespace {

int exit_code(pcp_status s) {
  switch (s) {
    case PCP_OK: return 0;
    case PCP_ERR_VALIDATION:
    case PCP_ERR_IO:
    case PCP_ERR_INVALID_ARGUMENT: return 1;
    case PCP_ERR_NUMERICAL: return 2;
    default: return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Positive-correlation tests for insurance data"};
  app.set_version_flag("--version", std::string(pcp_version()));
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out, learner, statistic;
  app.add_option("--config", config, "Run configuration (JSON, version 1)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed, overrides the config");
  app.add_option("--out", out, "Output directory, overrides the config");
  app.add_option("--learner", learner, "Learner kind")->check(CLI::IsMember({"network", "forest", "boosted"}));
  app.add_option("--statistic", statistic, "Statistic")->check(CLI::IsMember({"covariance", "correlation"}));

  const char* commands[][2] = {
      {"simulate", "Draw a synthetic dataset with known truth"},
      {"hyperopt", "Grid search over learner hyperparameters"},
      {"fit", "Train a learner and compare losses with constant models"},
      {"estimate", "Raw and cross-fitted covariance and correlation estimates"},
      {"test-intersection", "Intersection test over covariate groups"},
      {"test-sorted", "Sorted-groups test"},
      {"importance", "Leave-one-feature-out and impurity importance"},
      {"report", "Collect text tables of earlier commands"},
  };
  for (const auto& c : commands) app.add_subcommand(c[0], c[1])->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  pcp_run_options opts{};
  if (seed) {
    opts.has_seed = 1;
    opts.seed = *seed;
  }
  if (!out.empty()) opts.out = out.c_str();
  if (!learner.empty()) opts.learner = learner.c_str();
  if (!statistic.empty()) opts.statistic = statistic.c_str();

  const pcp_status s = pcp_run_command(command.c_str(), config.c_str(), &opts);
  if (s != PCP_OK) {
    std::cerr << "error: " << pcp_last_error() << '\n';
    return exit_code(s);
  }
  std::cout << command << ": " << pcp_last_summary() << '\n';
  return 0;
}
