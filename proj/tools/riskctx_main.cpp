#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "riskctx/experiments.hpp"

namespace {

int do_validate(const std::string& path) {
    const auto errors = riskctx::experiments::validate_file(path);
    if (errors.empty()) {
        std::cout << "ok: " << path << "\n";
        return 0;
    }
    for (const auto& e : errors)
        std::cerr << "config error" << (e.field.empty() ? "" : " at " + e.field) << ": "
                  << e.message << "\n";
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-averse contextual optimization experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int threads = 1;

    auto* run_cmd = app.add_subcommand("run", "run an experiment config");
    run_cmd->add_option("config", config_path, "JSON experiment config")->required();
    run_cmd->add_option("--out", out_dir, "output directory (default: config's out_dir)");
    run_cmd->add_option("--threads", threads, "worker threads for replicate trials");

    auto* validate_cmd = app.add_subcommand("validate", "check a config without running");
    validate_cmd->add_option("config", config_path, "JSON experiment config")->required();

    CLI11_PARSE(app, argc, argv);

    if (app.got_subcommand(validate_cmd)) return do_validate(config_path);

    std::ifstream is(config_path);
    if (!is) {
        std::cerr << "config error: cannot read file: " << config_path << "\n";
        return 2;
    }
    std::stringstream buffer;
    buffer << is.rdbuf();
    std::vector<riskctx::experiments::ValidationError> errors;
    const auto cfg = riskctx::experiments::parse_config(buffer.str(), errors);
    if (!errors.empty()) {
        for (const auto& e : errors)
            std::cerr << "config error" << (e.field.empty() ? "" : " at " + e.field) << ": "
                      << e.message << "\n";
        return 2;
    }
    const std::string out = out_dir.empty() ? cfg.out_dir : out_dir;
    return riskctx::experiments::run(cfg, out, threads);
}
