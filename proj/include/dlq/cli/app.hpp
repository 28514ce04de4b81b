#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

#include "dlq/cli/config.hpp"

namespace dlq::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,
    kExitAdvisory = 2,
    kExitSolver = 3,
    kExitSimulation = 4,
};

/// Entry point of the `dlq` tool. Results go to `out`, errors to `err` as
/// `{"error": {"kind": ..., "message": ...}}`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

// Commands on a loaded config. Each writes its files under cfg.out_dir
// together with manifest.json and config.effective.ini.
int cmd_check(const RunConfig& cfg, std::ostream& out);
int cmd_solve(const RunConfig& cfg, std::ostream& out);
int cmd_simulate(const RunConfig& cfg, std::ostream& out);
int cmd_frontier(const RunConfig& cfg, std::ostream& out);
/// Each path is a kernel CSV or a directory of them.
int cmd_compare(const RunConfig& cfg, const std::string& path_a, const std::string& path_b,
                std::ostream& out);

}  // namespace dlq::cli
