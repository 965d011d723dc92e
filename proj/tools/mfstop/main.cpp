#include <iostream>

#include <CLI11.hpp>

#include "mfstop/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Mean-field games of optimal stopping: solvers and simulators"};
    app.require_subcommand(1);

    std::string config, run_dir;
    mfstop::RunOverrides ov;
    unsigned workers = 0;
    std::string out_dir;

    auto* run = app.add_subcommand("run", "Run the task described by a config file");
    run->add_option("config", config, "TOML or JSON config")->required();
    run->add_option("-w,--workers", workers, "Worker threads (outputs do not depend on it)");
    run->add_option("-o,--output-dir", out_dir, "Override output_dir");

    auto* validate = app.add_subcommand("validate", "Parse and validate a config without running it");
    validate->add_option("config", config, "TOML or JSON config")->required();

    auto* report = app.add_subcommand("report", "Summarize a run directory into report.txt / report.csv");
    report->add_option("run_dir", run_dir, "Directory written by `mfstop run`")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*run) {
        if (workers > 0) ov.workers = workers;
        if (!out_dir.empty()) ov.output_dir = out_dir;
        return mfstop::run_experiment(config, std::cerr, ov);
    }
    if (*validate) return mfstop::validate_experiment(config, std::cerr);
    return mfstop::report_run(run_dir, std::cerr);
}
