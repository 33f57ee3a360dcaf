#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stella/charts.hpp"
#include "stella/config.hpp"
#include "stella/dataset.hpp"
#include "stella/evalharness.hpp"
#include "stella/probing.hpp"
#include "stella/remote.hpp"

namespace stella::app {

inline std::unique_ptr<RankerBackend> make_backend(const RunConfig& cfg) {
    if (cfg.backend == "simulated") return make_simulated_backend(cfg.bias_profile);
    RemoteConfig rc = cfg.remote;
    if (rc.base_url.empty()) throw ConfigError("remote backend requires remote.base_url");
    if (rc.model.empty()) throw ConfigError("remote backend requires remote.model");
    return std::make_unique<RemoteBackend>(rc);
}

inline std::map<std::string, UserHistory> load_users(const RunConfig& cfg) {
    if (cfg.dataset_path.empty()) throw ConfigError("dataset_path is required");
    return ingest(cfg.dataset_path);
}

inline HarnessConfig harness_config(const RunConfig& cfg) {
    HarnessConfig h;
    h.dataset_name = cfg.dataset_path.empty()
                         ? "toy"
                         : std::filesystem::path(cfg.dataset_path).stem().string();
    h.num_negatives = cfg.num_negatives;
    h.m = cfg.m;
    h.bootstrap_repeats = cfg.bootstrap_repeats;
    h.calibration = cfg.calibration;
    h.calibration.seed = cfg.seed;
    h.style = cfg.style;
    h.seed = cfg.seed;
    h.parallelism = cfg.parallelism;
    h.max_users = cfg.max_users;
    h.params_digest = params_digest(cfg);
    return h;
}

inline void ensure_out_dir(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
}

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline int cmd_ingest(const RunConfig& cfg, std::ostream& log) {
    IngestStats stats;
    auto users = ingest(cfg.dataset_path, 3.0, &stats);
    log << "users: " << stats.users << "\n"
        << "lines: " << stats.lines << "\n"
        << "malformed: " << stats.malformed << "\n"
        << "positives: " << stats.positives << "\n";
    std::size_t evaluable = 0;
    for (const auto& [_, u] : users) {
        if (u.positives().size() >= 2) ++evaluable;
    }
    log << "evaluable_users: " << evaluable << "\n";
    return 0;
}

inline int cmd_probe(const RunConfig& cfg, std::ostream& log) {
    ensure_out_dir(cfg);
    auto backend = make_backend(cfg);
    auto users = load_users(cfg);
    auto h = harness_config(cfg);
    ProbingResult details;
    auto matrix = probe_users(*backend, users, h, &details);
    log << "observations: " << details.valid << " valid, " << details.invalid << " invalid (rate "
        << details.invalid_rate() << ")\n";
    const auto path = out_path(cfg, "transition_matrix.csv");
    save_transition_matrix(matrix, path, backend->identity());
    log << "wrote " << path << "\n";
    return 0;
}

inline int cmd_calibrate(const RunConfig& cfg, std::ostream& log, const std::string& tm_path = "") {
    auto backend = make_backend(cfg);
    auto users = load_users(cfg);
    auto h = harness_config(cfg);
    auto examples = build_eval_examples(users, h);
    TransitionMatrix matrix =
        tm_path.empty() ? probe_users(*backend, users, h) : load_transition_matrix(tm_path);
    const auto& ex = examples.front();
    CalibrationConfig cal = h.calibration;
    cal.seed = derive_seed(ex.seed, "stella");
    auto res = calibrate(ex.slate, h.style, ex.history_prefix, *backend, matrix, cal, &log);
    log << "final_ranking:";
    for (auto p : res.final.order) log << ' ' << p;
    log << "\nhit@1: " << (res.final.top1() == *ex.slate.truth_index ? 1 : 0) << "\n";
    return 0;
}

inline int cmd_evaluate(const RunConfig& cfg, std::ostream& log, const std::string& tm_path = "") {
    ensure_out_dir(cfg);
    auto backend = make_backend(cfg);
    auto users = load_users(cfg);
    auto h = harness_config(cfg);
    MainExperimentResult res;
    if (tm_path.empty()) {
        res = run_main_experiment(*backend, users, h);
    } else {
        auto matrix = load_transition_matrix(tm_path);
        res = run_main_experiment(*backend, users, h, &matrix);
    }
    save_transition_matrix(res.matrix, out_path(cfg, "transition_matrix.csv"), backend->identity());
    write_results_csv(res.rows, out_path(cfg, "results.csv"));

    ChartSeries s;
    s.name = "hit@1";
    std::vector<std::string> methods;
    for (const auto& row : res.rows) {
        if (row.metric != "hit@1") continue;
        s.x.push_back(static_cast<double>(s.x.size()));
        s.y.push_back(row.value);
        methods.push_back(row.method);
        log << row.method << " hit@1 = " << row.value;
        if (row.std_dev) log << " +- " << *row.std_dev;
        log << "\n";
    }
    std::string xlab;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (i) xlab += " / ";
        xlab += std::to_string(i) + "=" + methods[i];
    }
    write_text_file(out_path(cfg, "methods.svg"),
                    render_line_chart("Hit@1 by method", xlab, {s}));
    log << "wrote " << out_path(cfg, "results.csv") << "\n";
    return 0;
}

inline int cmd_ablate_tm(const RunConfig& cfg, std::ostream& log) {
    ensure_out_dir(cfg);
    auto backend = make_backend(cfg);
    auto users = load_users(cfg);
    auto h = harness_config(cfg);
    auto res = run_ablation_uniform_tm(*backend, users, h);
    write_results_csv(res.rows, out_path(cfg, "ablation_results.csv"));
    for (const auto& row : res.rows) {
        if (row.metric == "hit@1") log << row.method << " hit@1 = " << row.value << "\n";
    }
    return 0;
}

inline int cmd_sweep_size(const RunConfig& cfg, std::ostream& log,
                          std::vector<std::size_t> sizes = {}) {
    ensure_out_dir(cfg);
    if (sizes.empty()) sizes = {2, 3, 4, 5, 8, 10, 15, 20, 25};
    auto backend = make_backend(cfg);
    auto users = load_users(cfg);
    auto h = harness_config(cfg);
    h.num_negatives = *std::max_element(sizes.begin(), sizes.end()) - 1;
    auto examples = build_eval_examples(users, h);
    auto rows = run_candidate_size_sweep(*backend, examples, sizes, h.style, cfg.seed, cfg.parallelism);

    std::ofstream csv(out_path(cfg, "size_sweep.csv"));
    csv << "# format_version=1\nsize,max,min,mean,random_baseline\n";
    ChartSeries mx{"max", {}, {}}, mn{"min", {}, {}}, mean{"mean", {}, {}}, rnd{"random", {}, {}};
    for (const auto& r : rows) {
        csv << r.size << ',' << detail::format_double(r.max_accuracy) << ','
            << detail::format_double(r.min_accuracy) << ',' << detail::format_double(r.mean_accuracy)
            << ',' << detail::format_double(r.random_baseline) << '\n';
        const auto x = static_cast<double>(r.size);
        mx.x.push_back(x); mx.y.push_back(r.max_accuracy);
        mn.x.push_back(x); mn.y.push_back(r.min_accuracy);
        mean.x.push_back(x); mean.y.push_back(r.mean_accuracy);
        rnd.x.push_back(x); rnd.y.push_back(r.random_baseline);
        log << "size " << r.size << ": mean " << r.mean_accuracy << "\n";
    }
    write_text_file(out_path(cfg, "size_sweep.svg"),
                    render_line_chart("Accuracy vs candidate size", "candidate size", {mx, mn, mean, rnd}));
    return 0;
}

inline int cmd_sweep_template(const RunConfig& cfg, std::ostream& log) {
    ensure_out_dir(cfg);
    auto backend = make_backend(cfg);
    auto users = load_users(cfg);
    auto h = harness_config(cfg);
    auto examples = build_eval_examples(users, h);
    const std::vector<LabelScheme> schemes = {
        LabelScheme::uppercase_letters, LabelScheme::arabic_numerals, LabelScheme::lowercase_letters,
        LabelScheme::greek_letters,     LabelScheme::roman_numerals,  LabelScheme::plain_list};
    auto tables = run_template_sweep(*backend, examples, schemes, h.style, cfg.seed, cfg.parallelism);

    std::ofstream csv(out_path(cfg, "template_sweep.csv"));
    csv << "# format_version=1\nscheme,position,accuracy\n";
    std::vector<ChartSeries> series;
    for (const auto& [scheme, table] : tables) {
        ChartSeries s;
        s.name = to_string(scheme);
        for (const auto& p : table) {
            csv << to_string(scheme) << ',' << p.position << ',' << detail::format_double(p.accuracy)
                << '\n';
            s.x.push_back(static_cast<double>(p.position));
            s.y.push_back(p.accuracy);
        }
        series.push_back(std::move(s));
        log << to_string(scheme) << " done\n";
    }
    write_text_file(out_path(cfg, "template_sweep.svg"),
                    render_line_chart("Accuracy vs truth position per template", "truth position", series));
    return 0;
}

inline int cmd_sweep_ensemble(const RunConfig& cfg, std::ostream& log,
                              std::vector<std::size_t> m_values = {}) {
    ensure_out_dir(cfg);
    if (m_values.empty()) m_values = {1, 2, 3, 4, 5};
    auto backend = make_backend(cfg);
    auto users = load_users(cfg);
    auto h = harness_config(cfg);
    auto rows = run_ensemble_length_sweep(*backend, users, h, m_values);
    write_results_csv(rows, out_path(cfg, "ensemble_sweep.csv"));
    ChartSeries s{"stella", {}, {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        s.x.push_back(static_cast<double>(m_values[i]));
        s.y.push_back(rows[i].value);
        log << rows[i].experiment << " hit@1 = " << rows[i].value << "\n";
    }
    write_text_file(out_path(cfg, "ensemble_sweep.svg"),
                    render_line_chart("Accuracy vs ensemble length", "m", {s}));
    return 0;
}

inline int cmd_heatmap(const RunConfig& cfg, std::ostream& log) {
    ensure_out_dir(cfg);
    auto backend = make_backend(cfg);
    auto users = load_users(cfg);
    auto h = harness_config(cfg);
    auto examples = build_eval_examples(users, h);
    auto grid = run_negative_permutation_grid(*backend, examples, h.style, cfg.seed, cfg.parallelism);

    std::ofstream csv(out_path(cfg, "heatmap.csv"));
    csv << "# format_version=1\ntruth_position,negative_permutation,accuracy\n";
    for (std::size_t pos = 0; pos < grid.accuracy.size(); ++pos) {
        for (std::size_t q = 0; q < grid.accuracy[pos].size(); ++q) {
            csv << pos << ',' << q << ',' << detail::format_double(grid.accuracy[pos][q]) << '\n';
        }
    }
    write_text_file(out_path(cfg, "heatmap.svg"),
                    render_heatmap("Accuracy by truth position x negative permutation", grid.accuracy,
                                   "negative permutation (lexicographic rank)", "truth position"));
    double max_col = 0.0, max_row = 0.0;
    for (double v : grid.column_variance) max_col = std::max(max_col, v);
    for (double v : grid.row_variance) max_row = std::max(max_row, v);
    log << "max column variance " << max_col << ", max row variance " << max_row << "\n";
    return 0;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    RunConfig c = cfg;
    c.backend = "simulated";
    cmd_evaluate(c, log);
    cmd_ablate_tm(c, log);
    cmd_heatmap(c, log);
    cmd_sweep_size(c, log, {2, 3, 4, 5, 8, 10});
    cmd_sweep_template(c, log);
    cmd_sweep_ensemble(c, log);
    return 0;
}

}  // namespace stella::app
