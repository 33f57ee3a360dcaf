#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "stella/domain.hpp"
#include "stella/errors.hpp"
#include "stella/prompting.hpp"
#include "stella/rankers.hpp"
#include "stella/rng.hpp"
#include "stella/transition_matrix.hpp"

namespace stella {

struct ProbeExample {
    std::string user_id;
    std::vector<std::string> history_prefix;
    CandidateSlate base_slate;                 // truth_index present
    std::vector<CandidateSlate> variants;      // truth at every position
};

// One probe example per ensemble step t: the (last-t)-th positive is the
// probe truth, everything before it is the prefix. The final positive is the
// held-out evaluation item and is never probed.
inline std::vector<ProbeExample> build_probe_set(const UserHistory& history, std::size_t m,
                                                 std::size_t num_negatives,
                                                 const std::vector<ItemRef>& negative_pool,
                                                 std::uint64_t seed,
                                                 std::vector<std::string>* warnings = nullptr) {
    if (m < 1) throw Error("build_probe_set: m must be >= 1");
    const auto positives = history.positives();
    if (positives.size() < 2) {
        throw InsufficientHistory("user " + history.user_id + " has fewer than 2 positive interactions");
    }
    if (negative_pool.size() < num_negatives) {
        throw PoolTooSmall("negative pool has " + std::to_string(negative_pool.size()) +
                           " items, need " + std::to_string(num_negatives));
    }
    std::size_t m_eff = std::min(m, positives.size() - 1);
    if (m_eff < m && warnings) {
        warnings->push_back("user " + history.user_id + ": m clamped from " + std::to_string(m) +
                            " to " + std::to_string(m_eff));
    }
    std::vector<ProbeExample> out;
    out.reserve(m_eff);
    for (std::size_t t = 1; t <= m_eff; ++t) {
        const std::size_t truth_idx = positives.size() - 1 - t;
        ProbeExample ex;
        ex.user_id = history.user_id;
        for (std::size_t i = 0; i < truth_idx; ++i) ex.history_prefix.push_back(positives[i].item.title);
        if (ex.history_prefix.empty()) {
            // first positive as probe truth would leave no prefix; skip it
            continue;
        }
        Rng rng(derive_seed(seed, "probe:" + history.user_id, t));
        auto picks = rng.sample_without_replacement(negative_pool.size(), num_negatives);
        ex.base_slate.items.push_back(positives[truth_idx].item);
        for (auto p : picks) ex.base_slate.items.push_back(negative_pool[p]);
        ex.base_slate.truth_index = 0;
        ex.base_slate.validate();
        ex.variants = truth_position_variants(ex.base_slate);
        out.push_back(std::move(ex));
    }
    return out;
}

// counts[i][y] incremented per (truth position, predicted top-1) pair;
// add-one smoothing keeps every likelihood cell positive for the Bayes update.
inline TransitionMatrix estimate_transition(
    const std::vector<std::pair<std::size_t, std::size_t>>& observations, std::size_t dim,
    bool smoothing = true) {
    if (dim < 2) throw Error("estimate_transition: dim must be >= 2");
    TransitionMatrix t;
    t.dim = dim;
    t.smoothing = smoothing;
    t.counts.assign(dim, std::vector<std::uint64_t>(dim, 0));
    for (const auto& [i, y] : observations) {
        if (i >= dim || y >= dim) throw DimensionMismatch("observation position out of range");
        ++t.counts[i][y];
    }
    t.entries.assign(dim, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < dim; ++i) {
        std::uint64_t row_total = 0;
        for (auto c : t.counts[i]) row_total += c;
        if (smoothing) {
            const double denom = static_cast<double>(row_total + dim);
            for (std::size_t y = 0; y < dim; ++y) {
                t.entries[i][y] = static_cast<double>(t.counts[i][y] + 1) / denom;
            }
        } else {
            if (row_total == 0) {
                throw EmptyObservations("row " + std::to_string(i) +
                                        " has no observations and smoothing is disabled");
            }
            for (std::size_t y = 0; y < dim; ++y) {
                t.entries[i][y] = static_cast<double>(t.counts[i][y]) / static_cast<double>(row_total);
            }
        }
    }
    t.validate();
    return t;
}

struct ProbingResult {
    TransitionMatrix matrix;
    std::size_t valid = 0;
    std::size_t invalid = 0;

    double invalid_rate() const {
        const std::size_t total = valid + invalid;
        return total == 0 ? 0.0 : static_cast<double>(invalid) / static_cast<double>(total);
    }
};

inline ProbingResult run_probing(RankerBackend& backend, const std::vector<ProbeExample>& probe_set,
                                 const PromptStyle& style, std::size_t parallelism, std::uint64_t seed,
                                 bool smoothing = true) {
    if (probe_set.empty()) throw EmptyInput("run_probing: empty probe set");
    const std::size_t j = probe_set.front().base_slate.size();
    struct Task {
        const ProbeExample* ex;
        const CandidateSlate* variant;
        std::size_t truth_pos;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    std::size_t global = 0;
    for (const auto& ex : probe_set) {
        if (ex.base_slate.size() != j) throw DimensionMismatch("probe slates must share one dimension");
        for (const auto& variant : ex.variants) {
            tasks.push_back({&ex, &variant, *variant.truth_index,
                             derive_seed(seed, "probing:" + ex.user_id, global++)});
        }
    }

    // -1 = invalid answer; aggregation is commutative counting, so the
    // completion order of workers cannot change the result.
    std::vector<long long> top1(tasks.size(), -1);
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t k = cursor.fetch_add(1);
            if (k >= tasks.size()) return;
            PromptContext ctx{style, tasks[k].ex->history_prefix, *tasks[k].variant};
            try {
                top1[k] = static_cast<long long>(backend.rank(ctx, tasks[k].seed).top1());
            } catch (const DecodeError&) {
            } catch (const InvalidAnswer&) {
            }
        }
    };
    const std::size_t nthreads = std::max<std::size_t>(1, std::min(parallelism, tasks.size()));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ProbingResult res;
    std::vector<std::pair<std::size_t, std::size_t>> obs;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        if (top1[k] < 0) {
            ++res.invalid;
        } else {
            ++res.valid;
            obs.emplace_back(tasks[k].truth_pos, static_cast<std::size_t>(top1[k]));
        }
    }
    if (res.valid * 2 < tasks.size()) {
        throw BackendExhausted("more than 50% of probing answers were invalid (" +
                               std::to_string(res.invalid) + "/" + std::to_string(tasks.size()) + ")");
    }
    res.matrix = estimate_transition(obs, j, smoothing);
    return res;
}

}  // namespace stella
