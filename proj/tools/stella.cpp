#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stella/app.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string backend;
    std::string out;
    std::string tm_path;
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> m_values;
    std::int64_t seed = -1;
    std::int64_t parallelism = -1;
};

stella::RunConfig resolve_config(const GlobalArgs& args) {
    stella::RunConfig cfg;
    if (!args.config_path.empty()) cfg = stella::load_config(args.config_path);
    if (!args.backend.empty()) cfg.backend = args.backend;
    if (!args.out.empty()) cfg.out_dir = args.out;
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (args.parallelism >= 0) cfg.parallelism = static_cast<std::size_t>(args.parallelism);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Position-bias probing and Bayesian calibration for listwise LLM recommenders"};
    app.require_subcommand(1);
    app.fallthrough();  // accept the global options after the subcommand too

    GlobalArgs args;
    app.add_option("--config", args.config_path, "JSON config file");
    app.add_option("--seed", args.seed, "Root seed (overrides config)");
    app.add_option("--out", args.out, "Output directory (overrides config)");
    app.add_option("--backend", args.backend, "Backend: simulated | remote");
    app.add_option("--parallelism", args.parallelism, "Worker bound (overrides config)");

    auto* ingest = app.add_subcommand("ingest", "Validate a dataset and print stats");
    auto* probe = app.add_subcommand("probe", "Build the probing set and write the transition matrix");
    auto* calibrate = app.add_subcommand("calibrate", "Calibrate one example and print the posterior trace");
    calibrate->add_option("--tm", args.tm_path, "Reuse a saved transition matrix CSV");
    auto* evaluate = app.add_subcommand("evaluate", "Main comparison: raw vs bootstrapping vs calibrated");
    evaluate->add_option("--tm", args.tm_path, "Reuse a saved transition matrix CSV");
    auto* ablate = app.add_subcommand("ablate-tm", "Rerun calibration with the uniform transition matrix");
    auto* sweep_size = app.add_subcommand("sweep-size", "Accuracy vs candidate-list size");
    sweep_size->add_option("--sizes", args.sizes, "Candidate sizes to sweep");
    auto* sweep_template = app.add_subcommand("sweep-template", "Position sweep per label scheme");
    auto* sweep_ensemble = app.add_subcommand("sweep-ensemble", "Accuracy vs probing ensemble length");
    sweep_ensemble->add_option("--m-values", args.m_values, "Ensemble lengths to sweep");
    auto* heatmap = app.add_subcommand("heatmap", "Truth position x negative permutation accuracy grid");
    auto* simulate = app.add_subcommand("simulate", "Run every experiment against the simulated backend");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        const auto cfg = resolve_config(args);
        if (ingest->parsed()) return stella::app::cmd_ingest(cfg, std::cout);
        if (probe->parsed()) return stella::app::cmd_probe(cfg, std::cout);
        if (calibrate->parsed()) return stella::app::cmd_calibrate(cfg, std::cout, args.tm_path);
        if (evaluate->parsed()) return stella::app::cmd_evaluate(cfg, std::cout, args.tm_path);
        if (ablate->parsed()) return stella::app::cmd_ablate_tm(cfg, std::cout);
        if (sweep_size->parsed()) return stella::app::cmd_sweep_size(cfg, std::cout, args.sizes);
        if (sweep_template->parsed()) return stella::app::cmd_sweep_template(cfg, std::cout);
        if (sweep_ensemble->parsed()) return stella::app::cmd_sweep_ensemble(cfg, std::cout, args.m_values);
        if (heatmap->parsed()) return stella::app::cmd_heatmap(cfg, std::cout);
        if (simulate->parsed()) return stella::app::cmd_simulate(cfg, std::cout);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const stella::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
