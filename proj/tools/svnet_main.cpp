// Experiment driver. Commands are registered in src/experiment.cpp; this
// translation unit only parses the command line and dispatches.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "svnet/experiment.hpp"

namespace {

struct CommandDoc {
    const char* name;
    const char* help;
};

constexpr CommandDoc kCommands[] = {
    {"converge-hybrid", "fourth-moment bound and MC check for the Volterra scheme gap"},
    {"converge-em", "Euler strong-error sweep on the bounded test model"},
    {"realize-check", "pricing network versus simulated average, plus the size audit"},
    {"size-sweep", "network size across dimension and target accuracy"},
    {"train", "fit ReLU regressors to Monte Carlo price labels"},
    {"price", "one Monte Carlo price"},
    {"truncation-sweep", "capped rough Bergomi price across truncation levels"},
    {"stopped-sweep", "stopped-domain price across box scales"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic volatility pricing networks: experiment harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    for (const CommandDoc& doc : kCommands) {
        CLI::App* sub = app.add_subcommand(doc.name, doc.help);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--out", out_dir, "output directory for CSV files");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        svnet::ExperimentConfig cfg = svnet::load_experiment_config(config_path);
        if (cfg.command != command) {
            std::fprintf(stderr, "svnet: config is for '%s' but '%s' was requested\n",
                         cfg.command.c_str(), command.c_str());
            return 3;
        }
        const svnet::CommandResult result = svnet::run_experiment(cfg);
        svnet::write_command_files(result, out_dir);
        for (const std::string& line : result.report) std::printf("%s\n", line.c_str());
        for (const svnet::CommandFile& file : result.files)
            std::printf("wrote %s/%s\n", out_dir.c_str(), file.name.c_str());
        return result.exit_code;
    } catch (const svnet::ConfigError& e) {
        std::fprintf(stderr, "svnet: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "svnet: %s\n", e.what());
        return 2;
    }
}
