#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cobo/experiment.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string output_dir;
    bool has_seed = false;
    std::uint64_t seed = 0;
    bool quiet = false;
};

cobo::ExperimentConfig load_with_overrides(const CliOptions& opt) {
    cobo::ExperimentConfig cfg = cobo::load_config(opt.config_path);
    if (!opt.output_dir.empty()) cfg.output_dir = opt.output_dir;
    if (opt.has_seed) cfg.train.seed = opt.seed;
    return cfg;
}

void add_common(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("config,--config", opt.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--output", opt.output_dir, "output directory (overrides config)");
    cmd->add_option("--seed", opt.seed, "seed override")->each([&opt](const std::string&) {
        opt.has_seed = true;
    });
    cmd->add_flag("--quiet", opt.quiet, "suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic multi-client collaborative-learning simulator"};
    app.require_subcommand(1);

    CliOptions opt;
    CLI::App* run = app.add_subcommand("run", "run the configured algorithms, write metrics CSVs");
    add_common(run, opt);
    CLI::App* compare =
        app.add_subcommand("compare", "run all algorithms with a shared task seed, write a summary");
    add_common(compare, opt);
    CLI::App* verify = app.add_subcommand(
        "verify-theory", "run the theorem-compliant configuration and check the bounds");
    add_common(verify, opt);

    CLI11_PARSE(app, argc, argv);

    try {
        const cobo::ExperimentConfig cfg = load_with_overrides(opt);
        if (run->parsed()) return cobo::cmd_run(cfg, opt.quiet);
        if (compare->parsed()) return cobo::cmd_compare(cfg, opt.quiet);
        return cobo::cmd_verify_theory(cfg, opt.quiet);
    } catch (const cobo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
