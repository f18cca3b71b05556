#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace svnet {

// ============================================================================
// Experiment runner: strict JSON configs, closed-form audit constants, and
// the eight harness commands. Every command is a pure function of its config
// and SVNET_THREADS never changes a single output byte.
// ============================================================================

// Closed-form constants shared by the moment bound and the driver stop rule.
struct BoundConstants {
    static double zeta4();               // pi^4 / 90
    static double moment_coefficient();  // (3/16) * zeta4()

    // stop level R(T, c, e) = sqrt(4 T log(16 c^2 e^-4)); throws
    // std::invalid_argument when the log argument is not > 1
    static double stop_level(double horizon, double envelope, double target_eps);
};

// Raised for anything wrong with the config itself: unreadable file, parse
// error, unknown key, wrong type, out-of-range value. The CLI maps it to
// exit code 3; every other failure is an assertion failure (exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A validated config. canonical is the sorted-key re-serialization of the
// user's JSON (with the command field filled in); hash is FNV-1a over it,
// so re-running the text embedded in a CSV header reproduces the run.
struct ExperimentConfig {
    std::string command;
    std::uint64_t master_seed = 1;
    std::uint64_t hash = 0;
    std::string canonical;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// One output file, held in memory so callers can diff runs byte for byte.
struct CommandFile {
    std::string name;  // basename, e.g. "converge_hybrid.csv"
    std::string content;
};

struct CommandResult {
    int exit_code = 0;  // 0 all checks pass, 2 at least one check failed
    std::vector<std::string> report;  // one line per check or summary item
    std::vector<CommandFile> files;
};

// Dispatches on cfg.command. Config problems discovered during the run
// (bad parameter combinations) throw ConfigError; numerical check failures
// are reported in-band through exit_code so the CSV still gets written.
CommandResult run_experiment(const ExperimentConfig& cfg);

void write_command_files(const CommandResult& result, const std::string& out_dir);

}  // namespace svnet
