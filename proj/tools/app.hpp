#pragma once

#include <optional>
#include <string>

#include "onepflow/bench.hpp"
#include "onepflow/diagnostics.hpp"

namespace onepflow::cli {

struct DiagnosticsPlan {
  uint64_t seed = 0;
  double holder_alpha = 0.5;
  int holder_pairs = 10000;
  std::optional<Cylinder> cylinder;
  std::vector<double> eps_list;
  std::vector<double> delta_list;
  double superlevel_mu = 0.5;
  double superlevel_nu = 0.5;
  std::vector<std::string> run_list;  // diagnostics selected for `diagnose`
};

struct Config {
  std::string preset;  // radial-steady | bingham-pipe | constant
  Scenario scenario;
  SolverConfig solver;
  DiagnosticsPlan plan;
  StructureReport structure;  // from the validation sweep at parse time
};

/// Parses the flat sectioned key-value file, builds the preset scenario with
/// overrides applied, and validates it (exponent window + structure sweep).
/// Unknown sections or keys are rejected with the line number.
Config parse_config(const std::string& path);

// Commands return process exit codes: 0 success, 1 runtime/contract error,
// 2 hard assertion failure. They write artifacts under out_dir.
int cmd_run(Config config, const std::string& out_dir);
int cmd_steady(Config config, const std::string& out_dir);
int cmd_sweep(Config config, const std::string& kind, const std::string& out_dir);
int cmd_diagnose(Config config, const std::string& out_dir);

/// Full argv entry point used by the binary and the exit-code tests.
int main_entry(int argc, const char* const* argv);

}  // namespace onepflow::cli
