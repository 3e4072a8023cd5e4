#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.h"

namespace relaxmpc {
namespace cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDesignError = 3 };

/// Worker count from RELAXMPC_WORKERS (default: hardware concurrency, ≥ 1).
/// Throws ConfigError for a malformed value.
int worker_count();

/// Runs jobs 0..n−1 on up to `workers` threads; results are indexed, so the
/// output does not depend on scheduling.
void parallel_for(int n, int workers, const std::function<void(int)>& job);

/// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& content);

/// Offline design pipeline (Lyapunov/Riccati equations, terminal set,
/// incremental constants, tube level, exact-penalty threshold); the report
/// is also written to <out_dir>/design.json.
nlohmann::json cmd_design(const ExperimentConfig& config);

/// Closed loop from every configured initial state: trace_<i>.csv and
/// summary.json in out_dir.
nlohmann::json cmd_simulate(const ExperimentConfig& config);

/// Mass-spring-damper comparison: relative cost table, feasibility marks,
/// solve-time ratios and feasibility boundaries.
nlohmann::json cmd_reproduce_linear(const std::string& out_dir, int workers);

/// Four-tank comparison of nominal, soft-state (hard terminal), slack and
/// tube-slack MPC under one matched ramp realization.
nlohmann::json cmd_reproduce_fourtank(const ExperimentConfig& config,
                                      const std::string& out_dir, int workers);

/// Parses argv, dispatches and maps exceptions to exit codes.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace cli
}  // namespace relaxmpc
