#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stella/domain.hpp"
#include "stella/errors.hpp"
#include "stella/rankers.hpp"
#include "stella/rng.hpp"
#include "stella/transition_matrix.hpp"

namespace stella {

struct CalibrationConfig {
    std::size_t max_iterations = 10;   // N
    double entropy_epsilon = 1e-3;     // eps
    std::size_t consecutive_stable = 2;  // c
    std::size_t aggregation_k = 3;
    std::uint64_t seed = 0;
    bool aggregate_raw = false;  // aggregate_source: posterior (default) | raw

    void validate() const {
        if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
        if (aggregation_k < 1) throw ConfigError("aggregation_k must be >= 1");
        if (entropy_epsilon <= 0.0) throw ConfigError("entropy_epsilon must be > 0");
    }
};

struct Snapshot {
    std::vector<double> posterior;  // over items, base-slate indexed
    Ranking derived;                // posterior-derived, base-slate coordinates
    double entropy = 0.0;
    Ranking raw;                    // model output mapped to base-slate coordinates
};

struct PosteriorState {
    std::vector<double> probs;            // over items
    std::vector<double> entropy_trace;    // E
    std::vector<Snapshot> snapshots;
    std::size_t iterations = 0;
    std::size_t queries = 0;
    std::size_t invalid_answers = 0;
};

// Shannon entropy, natural log, 0*ln 0 = 0.
inline double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return std::max(h, 0.0);
}

// One Bayes step: the hypothesis "item c is the truth" sits at position
// placement[c] this iteration, so its likelihood of the observed top-1 y is
// T[placement[c]][y].
inline std::vector<double> bayes_update(const std::vector<double>& p, const TransitionMatrix& t,
                                        std::size_t observed_y,
                                        const std::vector<std::size_t>& placement) {
    const std::size_t j = p.size();
    if (t.dim != j || placement.size() != j) throw DimensionMismatch("bayes_update: dim mismatch");
    if (observed_y >= j) throw DimensionMismatch("bayes_update: observed position out of range");
    std::vector<double> out(j);
    double sum = 0.0;
    for (std::size_t c = 0; c < j; ++c) {
        out[c] = p[c] * t.entries[placement[c]][observed_y];
        sum += out[c];
    }
    if (sum <= 0.0) throw DegenerateLikelihood("posterior mass vanished (unsmoothed matrix?)");
    for (double& v : out) v /= sum;
    return out;
}

// Items by descending posterior; exact ties fall back to the raw ranking
// order, so an uninformative posterior reproduces the raw output.
inline Ranking posterior_ranking(const std::vector<double>& p, const Ranking& tie_break) {
    const std::size_t j = p.size();
    if (!tie_break.is_permutation_of(j)) throw LengthMismatch("posterior_ranking: bad tie-break ranking");
    std::vector<std::size_t> raw_pos(j);
    for (std::size_t r = 0; r < j; ++r) raw_pos[tie_break.order[r]] = r;
    Ranking out;
    out.order.resize(j);
    for (std::size_t i = 0; i < j; ++i) out.order[i] = i;
    std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
        if (p[a] != p[b]) return p[a] > p[b];
        return raw_pos[a] < raw_pos[b];
    });
    return out;
}

// Borda count: rank r (0-based) earns j-r points. Ties: earliest first
// appearance at the best rank, then lower slate index.
inline Ranking borda_aggregate(const std::vector<Ranking>& rankings, std::size_t j) {
    if (rankings.empty()) throw EmptyInput("borda_aggregate: no rankings");
    std::vector<std::size_t> score(j, 0);
    std::vector<std::size_t> best_rank(j, j);
    std::vector<std::size_t> first_seen(j, std::numeric_limits<std::size_t>::max());
    for (std::size_t t = 0; t < rankings.size(); ++t) {
        const auto& r = rankings[t];
        if (!r.is_permutation_of(j)) throw LengthMismatch("borda_aggregate: ranking is not a permutation");
        for (std::size_t rank = 0; rank < j; ++rank) {
            const std::size_t item = r.order[rank];
            score[item] += j - rank;
            if (rank < best_rank[item]) {
                best_rank[item] = rank;
                first_seen[item] = t;
            }
        }
    }
    Ranking out;
    out.order.resize(j);
    for (std::size_t i = 0; i < j; ++i) out.order[i] = i;
    std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        if (best_rank[a] != best_rank[b]) return best_rank[a] < best_rank[b];
        if (first_seen[a] != first_seen[b]) return first_seen[a] < first_seen[b];
        return a < b;
    });
    return out;
}

namespace detail {

inline Ranking to_base_coordinates(const Ranking& raw, const std::vector<std::size_t>& pos_to_base) {
    Ranking out;
    out.order.reserve(raw.order.size());
    for (auto pos : raw.order) out.order.push_back(pos_to_base.at(pos));
    return out;
}

}  // namespace detail

struct CalibrationResult {
    Ranking final;
    PosteriorState state;
};

// Algorithm: uniform prior over items; each iteration shuffles the slate,
// queries the backend, Bayes-updates on the observed top-1 position, and
// records a snapshot. Stops when |dH| < eps for `c` consecutive iterations or
// after N iterations. The aggregation_k snapshots with the smallest entropy
// are Borda-aggregated; snapshots whose posterior is exactly uniform carry no
// calibration information and are skipped, so an all-uniform run falls back
// to the first snapshot's raw ranking.
inline CalibrationResult calibrate(const CandidateSlate& base_slate, const PromptStyle& style,
                                   const std::vector<std::string>& history_titles,
                                   RankerBackend& backend, const TransitionMatrix& t,
                                   const CalibrationConfig& cfg, std::ostream* trace = nullptr) {
    base_slate.validate();
    cfg.validate();
    const std::size_t j = base_slate.size();
    if (t.dim != j) throw DimensionMismatch("calibrate: matrix dim != slate size");

    CalibrationResult res;
    auto& st = res.state;
    st.probs.assign(j, 1.0 / static_cast<double>(j));

    const std::size_t max_queries = 2 * cfg.max_iterations;
    std::size_t stable = 0;
    double prev_entropy = 0.0;
    bool have_prev = false;

    while (st.iterations < cfg.max_iterations && st.queries < max_queries) {
        const std::uint64_t sub = derive_seed(cfg.seed, "calibrate", st.queries);
        ++st.queries;
        auto shuffled = shuffle_slate_mapped(base_slate, sub);
        PromptContext ctx{style, history_titles, shuffled.slate};
        Ranking raw;
        try {
            raw = backend.rank(ctx, derive_seed(sub, "query"));
        } catch (const DecodeError&) {
            ++st.invalid_answers;  // does not consume a Bayes iteration
            continue;
        } catch (const InvalidAnswer& e) {
            st.invalid_answers += std::max<std::size_t>(1, e.raw_texts.size());
            continue;
        }
        const std::size_t observed_y = raw.top1();
        st.probs = bayes_update(st.probs, t, observed_y, shuffled.base_to_pos);
        const double h = entropy(st.probs);
        st.entropy_trace.push_back(h);

        Snapshot snap;
        snap.posterior = st.probs;
        snap.raw = detail::to_base_coordinates(raw, shuffled.pos_to_base);
        snap.derived = posterior_ranking(st.probs, snap.raw);
        snap.entropy = h;
        st.snapshots.push_back(std::move(snap));
        ++st.iterations;

        if (trace) {
            nlohmann::json line{{"iteration", st.iterations},
                                {"placement", shuffled.base_to_pos},
                                {"observed_y", observed_y},
                                {"posterior", st.probs},
                                {"entropy", h}};
            *trace << line.dump() << '\n';
        }

        if (have_prev && std::abs(h - prev_entropy) < cfg.entropy_epsilon) {
            if (++stable >= cfg.consecutive_stable) break;
        } else {
            stable = 0;
        }
        prev_entropy = h;
        have_prev = true;
    }

    if (st.snapshots.empty()) {
        throw BackendExhausted("calibrate: no valid answer in " + std::to_string(st.queries) + " queries");
    }

    const double max_entropy = std::log(static_cast<double>(j)) - 1e-9;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < st.snapshots.size(); ++i) {
        if (st.snapshots[i].entropy < max_entropy) eligible.push_back(i);
    }
    if (eligible.empty()) {
        res.final = st.snapshots.front().raw;
        return res;
    }
    std::sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
        if (st.snapshots[a].entropy != st.snapshots[b].entropy) {
            return st.snapshots[a].entropy < st.snapshots[b].entropy;
        }
        return a < b;
    });
    if (eligible.size() > cfg.aggregation_k) eligible.resize(cfg.aggregation_k);
    std::sort(eligible.begin(), eligible.end());
    std::vector<Ranking> selected;
    for (auto i : eligible) {
        selected.push_back(cfg.aggregate_raw ? st.snapshots[i].raw : st.snapshots[i].derived);
    }
    res.final = borda_aggregate(selected, j);
    return res;
}

// Bootstrapping baseline: B independent shuffled queries, Borda-aggregated in
// base-slate coordinates. No transition-matrix correction.
inline Ranking bootstrap_baseline(const CandidateSlate& base_slate, const PromptStyle& style,
                                  const std::vector<std::string>& history_titles,
                                  RankerBackend& backend, std::size_t repeats, std::uint64_t seed) {
    base_slate.validate();
    if (repeats < 1) throw ConfigError("bootstrap_baseline: repeats must be >= 1");
    const std::size_t j = base_slate.size();
    std::vector<Ranking> collected;
    std::size_t queries = 0;
    const std::size_t max_queries = 2 * repeats;
    while (collected.size() < repeats && queries < max_queries) {
        const std::uint64_t sub = derive_seed(seed, "bootstrap", queries);
        ++queries;
        auto shuffled = shuffle_slate_mapped(base_slate, sub);
        PromptContext ctx{style, history_titles, shuffled.slate};
        try {
            Ranking raw = backend.rank(ctx, derive_seed(sub, "query"));
            collected.push_back(detail::to_base_coordinates(raw, shuffled.pos_to_base));
        } catch (const DecodeError&) {
        } catch (const InvalidAnswer&) {
        }
    }
    if (collected.empty()) {
        throw BackendExhausted("bootstrap_baseline: no valid answer in " + std::to_string(queries) +
                               " queries");
    }
    return borda_aggregate(collected, j);
}

}  // namespace stella
