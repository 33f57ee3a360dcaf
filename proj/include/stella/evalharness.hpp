#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "stella/calibration.hpp"
#include "stella/dataset.hpp"
#include "stella/domain.hpp"
#include "stella/errors.hpp"
#include "stella/probing.hpp"
#include "stella/rankers.hpp"
#include "stella/rng.hpp"

namespace stella {

struct EvalExample {
    std::string user_id;
    std::vector<std::string> history_prefix;
    CandidateSlate slate;  // truth + sampled negatives, truth_index present
    std::uint64_t seed = 0;
};

struct ResultRow {
    std::string experiment;
    std::string dataset;
    std::string method;
    std::string metric;
    double value = 0.0;
    std::optional<double> std_dev;
    std::string params_digest;
};

inline void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& fn) {
    const std::size_t nthreads = std::max<std::size_t>(1, std::min(parallelism, n));
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = cursor.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

// Leave-one-out: the user's final positive is the evaluation ground truth,
// all earlier positives form the history prefix.
inline EvalExample leave_one_out(const UserHistory& history, std::size_t num_negatives,
                                 const std::vector<ItemRef>& pool, std::uint64_t seed) {
    const auto positives = history.positives();
    if (positives.size() < 2) {
        throw InsufficientHistory("user " + history.user_id + " has fewer than 2 positive interactions");
    }
    if (pool.size() < num_negatives) {
        throw PoolTooSmall("negative pool smaller than num_negatives");
    }
    EvalExample ex;
    ex.user_id = history.user_id;
    ex.seed = derive_seed(seed, "eval:" + history.user_id);
    for (std::size_t i = 0; i + 1 < positives.size(); ++i) {
        ex.history_prefix.push_back(positives[i].item.title);
    }
    Rng rng(ex.seed);
    auto picks = rng.sample_without_replacement(pool.size(), num_negatives);
    ex.slate.items.push_back(positives.back().item);
    for (auto p : picks) ex.slate.items.push_back(pool[p]);
    ex.slate.truth_index = 0;
    ex.slate.validate();
    return ex;
}

struct MeanStd {
    double mean = 0.0;
    double std_dev = 0.0;
};

// Mean Hit@1 over records. The +- is the dispersion across truth-position
// arrangement groups when records carry permutation_id;
// otherwise it falls back to bootstrap resamples.
inline MeanStd hit_at_1(const std::vector<EvalRecord>& records, std::size_t bootstrap_resamples = 200,
                        std::uint64_t seed = 0) {
    if (records.empty()) throw EmptyInput("hit_at_1: no records");
    double total = 0.0;
    std::map<std::size_t, std::pair<double, std::size_t>> groups;  // permutation_id -> (hits, n)
    bool grouped = true;
    for (const auto& r : records) {
        const double s = r.predicted.top1() == r.truth_index ? 1.0 : 0.0;
        total += s;
        if (r.slate.permutation_id) {
            auto& g = groups[*r.slate.permutation_id];
            g.first += s;
            ++g.second;
        } else {
            grouped = false;
        }
    }
    MeanStd out;
    out.mean = total / static_cast<double>(records.size());
    if (grouped && groups.size() > 1) {
        double gm = 0.0;
        std::vector<double> accs;
        for (const auto& [_, g] : groups) {
            accs.push_back(g.first / static_cast<double>(g.second));
            gm += accs.back();
        }
        gm /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - gm) * (a - gm);
        out.std_dev = std::sqrt(var / static_cast<double>(accs.size()));
    } else {
        Rng rng(derive_seed(seed, "hit_at_1_bootstrap"));
        std::vector<double> means;
        for (std::size_t b = 0; b < bootstrap_resamples; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < records.size(); ++i) {
                const auto& r = records[rng.below(records.size())];
                s += r.predicted.top1() == r.truth_index ? 1.0 : 0.0;
            }
            means.push_back(s / static_cast<double>(records.size()));
        }
        double gm = 0.0;
        for (double v : means) gm += v;
        gm /= static_cast<double>(means.size());
        double var = 0.0;
        for (double v : means) var += (v - gm) * (v - gm);
        out.std_dev = std::sqrt(var / static_cast<double>(means.size()));
    }
    return out;
}

struct PositionAccuracy {
    std::size_t position = 0;
    double accuracy = 0.0;
    std::size_t valid = 0;
    std::size_t invalid = 0;
};

// Accuracy per planted truth position; every example is expanded so each
// position is covered exactly once.
inline std::vector<PositionAccuracy> run_position_sweep(RankerBackend& backend,
                                                        const std::vector<EvalExample>& examples,
                                                        const PromptStyle& style, std::uint64_t seed,
                                                        std::size_t parallelism = 1) {
    if (examples.empty()) throw EmptyInput("run_position_sweep: no examples");
    const std::size_t j = examples.front().slate.size();
    std::vector<std::vector<int>> outcome(examples.size(), std::vector<int>(j, -1));  // -1 invalid
    parallel_for(examples.size(), parallelism, [&](std::size_t e) {
        const auto variants = truth_position_variants(examples[e].slate);
        for (std::size_t pos = 0; pos < j; ++pos) {
            PromptContext ctx{style, examples[e].history_prefix, variants[pos]};
            try {
                Ranking r = backend.rank(ctx, derive_seed(seed, "possweep:" + examples[e].user_id, pos));
                outcome[e][pos] = r.top1() == pos ? 1 : 0;
            } catch (const DecodeError&) {
            } catch (const InvalidAnswer&) {
            }
        }
    });
    std::vector<PositionAccuracy> out(j);
    for (std::size_t pos = 0; pos < j; ++pos) {
        out[pos].position = pos;
        std::size_t hits = 0;
        for (std::size_t e = 0; e < examples.size(); ++e) {
            if (outcome[e][pos] < 0) {
                ++out[pos].invalid;
            } else {
                ++out[pos].valid;
                hits += static_cast<std::size_t>(outcome[e][pos]);
            }
        }
        out[pos].accuracy = out[pos].valid ? static_cast<double>(hits) / static_cast<double>(out[pos].valid) : 0.0;
    }
    return out;
}

struct PermutationGrid {
    std::size_t j = 0;
    std::vector<std::vector<double>> accuracy;  // [truth position][negative permutation rank]
    std::vector<double> row_variance;           // per truth position, across negative permutations
    std::vector<double> column_variance;        // per negative permutation, across truth positions
};

namespace detail {

inline double population_variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return var / static_cast<double>(v.size());
}

}  // namespace detail

// Accuracy over the full (truth position) x (negative permutation) grid.
inline PermutationGrid run_negative_permutation_grid(RankerBackend& backend,
                                                     const std::vector<EvalExample>& examples,
                                                     const PromptStyle& style, std::uint64_t seed,
                                                     std::size_t parallelism = 1) {
    if (examples.empty()) throw EmptyInput("run_negative_permutation_grid: no examples");
    const std::size_t j = examples.front().slate.size();
    if (j > 5) throw SlateTooLarge("negative-permutation grid limited to j <= 5");

    // lexicographic permutations of the j-1 negatives
    std::vector<std::vector<std::size_t>> neg_perms;
    {
        std::vector<std::size_t> idx(j - 1);
        for (std::size_t i = 0; i < j - 1; ++i) idx[i] = i;
        do {
            neg_perms.push_back(idx);
        } while (std::next_permutation(idx.begin(), idx.end()));
    }

    PermutationGrid grid;
    grid.j = j;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> cell(
        j, std::vector<std::pair<std::size_t, std::size_t>>(neg_perms.size(), {0, 0}));  // hits, valid
    std::vector<std::mutex> row_locks(j);

    parallel_for(examples.size(), parallelism, [&](std::size_t e) {
        const auto& base = examples[e].slate;
        std::vector<ItemRef> negatives;
        for (std::size_t i = 0; i < j; ++i) {
            if (i != *base.truth_index) negatives.push_back(base.items[i]);
        }
        for (std::size_t pos = 0; pos < j; ++pos) {
            for (std::size_t q = 0; q < neg_perms.size(); ++q) {
                CandidateSlate s;
                std::vector<ItemRef> ordered;
                for (auto src : neg_perms[q]) ordered.push_back(negatives[src]);
                ordered.insert(ordered.begin() + static_cast<std::ptrdiff_t>(pos), base.items[*base.truth_index]);
                s.items = std::move(ordered);
                s.truth_index = pos;
                PromptContext ctx{style, examples[e].history_prefix, s};
                try {
                    Ranking r = backend.rank(
                        ctx, derive_seed(seed, "grid:" + examples[e].user_id, pos * neg_perms.size() + q));
                    std::lock_guard lock(row_locks[pos]);
                    cell[pos][q].second += 1;
                    if (r.top1() == pos) cell[pos][q].first += 1;
                } catch (const DecodeError&) {
                } catch (const InvalidAnswer&) {
                }
            }
        }
    });

    grid.accuracy.assign(j, std::vector<double>(neg_perms.size(), 0.0));
    for (std::size_t pos = 0; pos < j; ++pos) {
        for (std::size_t q = 0; q < neg_perms.size(); ++q) {
            if (cell[pos][q].second) {
                grid.accuracy[pos][q] =
                    static_cast<double>(cell[pos][q].first) / static_cast<double>(cell[pos][q].second);
            }
        }
        grid.row_variance.push_back(detail::population_variance(grid.accuracy[pos]));
    }
    for (std::size_t q = 0; q < neg_perms.size(); ++q) {
        std::vector<double> col;
        for (std::size_t pos = 0; pos < j; ++pos) col.push_back(grid.accuracy[pos][q]);
        grid.column_variance.push_back(detail::population_variance(col));
    }
    return grid;
}

struct SizeSweepRow {
    std::size_t size = 0;
    double max_accuracy = 0.0;
    double min_accuracy = 0.0;
    double mean_accuracy = 0.0;
    double random_baseline = 0.0;  // 1/size, analytic
};

inline std::vector<SizeSweepRow> run_candidate_size_sweep(RankerBackend& backend,
                                                          const std::vector<EvalExample>& examples,
                                                          const std::vector<std::size_t>& sizes,
                                                          const PromptStyle& style, std::uint64_t seed,
                                                          std::size_t parallelism = 1) {
    if (examples.empty()) throw EmptyInput("run_candidate_size_sweep: no examples");
    std::vector<SizeSweepRow> out;
    for (std::size_t size : sizes) {
        if (size < 2 || size >= kMaxSlateSize + 1) throw Error("candidate size out of [2, 26]");
        std::vector<EvalExample> sub;
        for (const auto& ex : examples) {
            if (ex.slate.size() < size) throw Error("examples carry fewer candidates than sweep size");
            EvalExample reduced = ex;
            reduced.slate.items.resize(size);  // truth at index 0 plus first size-1 negatives
            reduced.slate.truth_index = 0;
            sub.push_back(std::move(reduced));
        }
        auto sweep = run_position_sweep(backend, sub, style, derive_seed(seed, "size", size), parallelism);
        SizeSweepRow row;
        row.size = size;
        row.random_baseline = 1.0 / static_cast<double>(size);
        row.max_accuracy = sweep.front().accuracy;
        row.min_accuracy = sweep.front().accuracy;
        double total = 0.0;
        for (const auto& p : sweep) {
            row.max_accuracy = std::max(row.max_accuracy, p.accuracy);
            row.min_accuracy = std::min(row.min_accuracy, p.accuracy);
            total += p.accuracy;
        }
        row.mean_accuracy = total / static_cast<double>(sweep.size());
        out.push_back(row);
    }
    return out;
}

inline std::vector<std::pair<LabelScheme, std::vector<PositionAccuracy>>> run_template_sweep(
    RankerBackend& backend, const std::vector<EvalExample>& examples,
    const std::vector<LabelScheme>& schemes, const PromptStyle& base_style, std::uint64_t seed,
    std::size_t parallelism = 1) {
    if (schemes.empty()) throw EmptyInput("run_template_sweep: no schemes");
    std::vector<std::pair<LabelScheme, std::vector<PositionAccuracy>>> out;
    for (auto scheme : schemes) {
        PromptStyle style = base_style;
        style.scheme = scheme;
        out.emplace_back(scheme, run_position_sweep(backend, examples, style,
                                                    derive_seed(seed, "template:" + to_string(scheme)),
                                                    parallelism));
    }
    return out;
}

struct HarnessConfig {
    std::string dataset_name = "toy";
    std::size_t num_negatives = 4;  // j = num_negatives + 1
    std::size_t m = 5;
    std::size_t bootstrap_repeats = 3;
    CalibrationConfig calibration;
    PromptStyle style;
    std::uint64_t seed = 0;
    std::size_t parallelism = 1;
    std::size_t max_users = 200;
    std::string params_digest;
};

struct MainExperimentResult {
    std::vector<ResultRow> rows;
    TransitionMatrix matrix;
};

namespace detail {

struct MethodOutcome {
    std::vector<EvalRecord> records;
    std::size_t invalid = 0;
};

inline ResultRow make_row(const HarnessConfig& cfg, std::string experiment, std::string method,
                          std::string metric, double value, std::optional<double> sd = std::nullopt) {
    return ResultRow{std::move(experiment), cfg.dataset_name, std::move(method), std::move(metric),
                     value, sd, cfg.params_digest};
}

}  // namespace detail

inline std::vector<EvalExample> build_eval_examples(const std::map<std::string, UserHistory>& users,
                                                    const HarnessConfig& cfg) {
    std::vector<EvalExample> examples;
    for (const auto& [uid, history] : users) {
        if (examples.size() >= cfg.max_users) break;
        try {
            examples.push_back(
                leave_one_out(history, cfg.num_negatives, negative_pool_for(users, uid), cfg.seed));
        } catch (const InsufficientHistory&) {
        }
    }
    if (examples.empty()) throw EmptyInput("no evaluable users in dataset");
    return examples;
}

inline TransitionMatrix probe_users(RankerBackend& backend, const std::map<std::string, UserHistory>& users,
                                    const HarnessConfig& cfg, ProbingResult* details = nullptr) {
    std::vector<ProbeExample> probes;
    std::size_t used = 0;
    for (const auto& [uid, history] : users) {
        if (used >= cfg.max_users) break;
        try {
            auto ex = build_probe_set(history, cfg.m, cfg.num_negatives, negative_pool_for(users, uid),
                                      cfg.seed);
            probes.insert(probes.end(), ex.begin(), ex.end());
            ++used;
        } catch (const InsufficientHistory&) {
        }
    }
    auto res = run_probing(backend, probes, cfg.style, cfg.parallelism, derive_seed(cfg.seed, "probing"));
    if (details) *details = res;
    return res.matrix;
}

// Headline comparison: raw output (mean +- std across truth-position
// arrangements), Bootstrapping, and the calibrated two-stage pipeline.
inline MainExperimentResult run_main_experiment(RankerBackend& backend,
                                                const std::map<std::string, UserHistory>& users,
                                                const HarnessConfig& cfg,
                                                const TransitionMatrix* matrix = nullptr,
                                                const std::string& experiment = "main") {
    const auto examples = build_eval_examples(users, cfg);
    const std::size_t j = cfg.num_negatives + 1;

    MainExperimentResult out;
    out.matrix = matrix ? *matrix : probe_users(backend, users, cfg);
    if (out.matrix.dim != j) throw DimensionMismatch("transition matrix dim != candidate size");

    struct PerExample {
        std::vector<EvalRecord> raw;
        std::optional<EvalRecord> boot;
        std::optional<EvalRecord> stella;
        std::size_t invalid_raw = 0;
        std::size_t invalid_boot = 0;
        std::size_t invalid_stella = 0;
    };
    std::vector<PerExample> per(examples.size());

    parallel_for(examples.size(), cfg.parallelism, [&](std::size_t e) {
        const auto& ex = examples[e];
        auto& slot = per[e];
        // raw: each truth-position arrangement once (disjoint seed lane)
        const auto variants = truth_position_variants(ex.slate);
        for (std::size_t pos = 0; pos < j; ++pos) {
            PromptContext ctx{cfg.style, ex.history_prefix, variants[pos]};
            try {
                Ranking r = backend.rank(ctx, derive_seed(ex.seed, "raw", pos));
                slot.raw.push_back(EvalRecord{ex.user_id, variants[pos], r, pos,
                                              r.top1() == pos ? 1.0 : 0.0});
            } catch (const DecodeError&) {
                ++slot.invalid_raw;
            } catch (const InvalidAnswer&) {
                ++slot.invalid_raw;
            }
        }
        // bootstrapping
        try {
            Ranking b = bootstrap_baseline(ex.slate, cfg.style, ex.history_prefix, backend,
                                           cfg.bootstrap_repeats, derive_seed(ex.seed, "boot"));
            slot.boot = EvalRecord{ex.user_id, ex.slate, b, *ex.slate.truth_index,
                                   b.top1() == *ex.slate.truth_index ? 1.0 : 0.0};
        } catch (const BackendExhausted&) {
            ++slot.invalid_boot;
        }
        // calibrated pipeline
        try {
            CalibrationConfig cal = cfg.calibration;
            cal.seed = derive_seed(ex.seed, "stella");
            auto res = calibrate(ex.slate, cfg.style, ex.history_prefix, backend, out.matrix, cal);
            slot.stella = EvalRecord{ex.user_id, ex.slate, res.final, *ex.slate.truth_index,
                                     res.final.top1() == *ex.slate.truth_index ? 1.0 : 0.0};
            slot.invalid_stella += res.state.invalid_answers;
        } catch (const BackendExhausted&) {
            ++slot.invalid_stella;
        }
    });

    std::vector<EvalRecord> raw_records, boot_records, stella_records;
    std::size_t invalid_raw = 0, invalid_boot = 0, invalid_stella = 0;
    for (auto& slot : per) {
        raw_records.insert(raw_records.end(), slot.raw.begin(), slot.raw.end());
        if (slot.boot) boot_records.push_back(*slot.boot);
        if (slot.stella) stella_records.push_back(*slot.stella);
        invalid_raw += slot.invalid_raw;
        invalid_boot += slot.invalid_boot;
        invalid_stella += slot.invalid_stella;
    }

    const std::string method = "stella";
    auto raw_stat = hit_at_1(raw_records, 200, cfg.seed);
    auto boot_stat = hit_at_1(boot_records, 200, cfg.seed);
    auto stella_stat = hit_at_1(stella_records, 200, cfg.seed);
    out.rows.push_back(detail::make_row(cfg, experiment, "raw", "hit@1", raw_stat.mean, raw_stat.std_dev));
    out.rows.push_back(detail::make_row(cfg, experiment, "bootstrapping", "hit@1", boot_stat.mean));
    out.rows.push_back(detail::make_row(cfg, experiment, method, "hit@1", stella_stat.mean));
    const auto rate = [](std::size_t invalid, std::size_t valid) {
        const std::size_t total = invalid + valid;
        return total ? static_cast<double>(invalid) / static_cast<double>(total) : 0.0;
    };
    out.rows.push_back(detail::make_row(cfg, experiment, "raw", "invalid_rate",
                                        rate(invalid_raw, raw_records.size())));
    out.rows.push_back(detail::make_row(cfg, experiment, "bootstrapping", "invalid_rate",
                                        rate(invalid_boot, boot_records.size())));
    out.rows.push_back(detail::make_row(cfg, experiment, method, "invalid_rate",
                                        rate(invalid_stella, stella_records.size())));
    return out;
}

// Ablation: the calibration stage runs with the uniform
// matrix, every entry 1/j.
inline MainExperimentResult run_ablation_uniform_tm(RankerBackend& backend,
                                                    const std::map<std::string, UserHistory>& users,
                                                    const HarnessConfig& cfg) {
    const TransitionMatrix uniform = TransitionMatrix::uniform(cfg.num_negatives + 1);
    auto res = run_main_experiment(backend, users, cfg, &uniform, "ablate-tm");
    for (auto& row : res.rows) {
        if (row.method == "stella") row.method = "stella_uniform_tm";
    }
    return res;
}

// Ensemble-length sweep: re-probe with each ensemble length m, recalibrate,
// report the calibrated accuracy per m.
inline std::vector<ResultRow> run_ensemble_length_sweep(RankerBackend& backend,
                                                        const std::map<std::string, UserHistory>& users,
                                                        const HarnessConfig& cfg,
                                                        const std::vector<std::size_t>& m_values) {
    std::vector<ResultRow> rows;
    for (std::size_t m : m_values) {
        if (m < 1 || m > 10) throw ConfigError("ensemble length m must be in [1, 10]");
        HarnessConfig sub = cfg;
        sub.m = m;
        auto matrix = probe_users(backend, users, sub);
        const std::string experiment =
            "sweep-ensemble/m=" + std::to_string(m) + (m == 5 ? "(default)" : "");
        auto res = run_main_experiment(backend, users, sub, &matrix, experiment);
        for (auto& row : res.rows) {
            if (row.method == "stella" && row.metric == "hit@1") rows.push_back(row);
        }
    }
    return rows;
}

inline void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::vector<ResultRow> sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tie(a.experiment, a.dataset, a.method, a.metric) <
               std::tie(b.experiment, b.dataset, b.method, b.metric);
    });
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << "# format_version=1\n";
    f << "experiment,dataset,method,metric,value,std,params_digest\n";
    for (const auto& r : sorted) {
        f << r.experiment << ',' << r.dataset << ',' << r.method << ',' << r.metric << ','
          << detail::format_double(r.value) << ',';
        if (r.std_dev) f << detail::format_double(*r.std_dev);
        f << ',' << r.params_digest << '\n';
    }
}

}  // namespace stella
