#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "stella/domain.hpp"
#include "stella/errors.hpp"
#include "stella/prompting.hpp"
#include "stella/rng.hpp"
#include "stella/transition_matrix.hpp"

namespace stella {

class RankerBackend {
public:
    virtual ~RankerBackend() = default;
    virtual Ranking rank(const PromptContext& ctx, std::uint64_t seed) = 0;
    virtual std::string identity() const = 0;
};

enum class TailRule { uniform_random, position_order };

// Simulator parameterization: the planted transition matrix plus how the
// non-top positions are filled.
struct BiasProfile {
    TransitionMatrix planted_matrix;  // T*, row-stochastic
    TailRule tail_rule = TailRule::uniform_random;

    // The canonical profile used throughout the verification suite: strong
    // diagonal on positions 0..j-2 and a near-uniform last row modeling the
    // last-position failure mode.
    static BiasProfile canonical(std::size_t j = 5, double diagonal = 0.55, double last_diag = 0.04) {
        std::vector<std::vector<double>> rows(j, std::vector<double>(j));
        for (std::size_t i = 0; i + 1 < j; ++i) {
            for (std::size_t y = 0; y < j; ++y) {
                rows[i][y] = y == i ? diagonal : (1.0 - diagonal) / static_cast<double>(j - 1);
            }
        }
        for (std::size_t y = 0; y < j; ++y) {
            rows[j - 1][y] = y == j - 1 ? last_diag : (1.0 - last_diag) / static_cast<double>(j - 1);
        }
        BiasProfile p;
        p.planted_matrix = TransitionMatrix::from_rows(std::move(rows));
        return p;
    }

    static BiasProfile truthful(std::size_t j) {
        BiasProfile p;
        p.planted_matrix = TransitionMatrix::identity(j);
        p.tail_rule = TailRule::position_order;
        return p;
    }

    static BiasProfile uniform(std::size_t j) {
        BiasProfile p;
        p.planted_matrix = TransitionMatrix::uniform(j);
        return p;
    }

    // Diagonal decays with slate size, floored at chance level: mean accuracy
    // is non-increasing in j by construction.
    static BiasProfile degrading(std::size_t j) {
        const double diag = std::max(1.0 / static_cast<double>(j),
                                     0.95 - 0.1 * (static_cast<double>(j) - 2.0));
        std::vector<std::vector<double>> rows(j, std::vector<double>(j));
        for (std::size_t i = 0; i < j; ++i) {
            for (std::size_t y = 0; y < j; ++y) {
                rows[i][y] = y == i ? diag : (1.0 - diag) / static_cast<double>(j - 1);
            }
        }
        BiasProfile p;
        p.planted_matrix = TransitionMatrix::from_rows(std::move(rows));
        return p;
    }

    std::string digest() const {
        std::uint64_t h = fnv1a(tail_rule == TailRule::uniform_random ? "uniform_random" : "position_order");
        for (const auto& row : planted_matrix.entries) {
            for (double v : row) h = fnv1a(detail::format_double(v), h);
        }
        return hex_digest(h);
    }
};

// Draws the top-1 position from the planted row of the preferred item (the
// slate's truth), then fills the tail per the tail rule.
inline Ranking simulated_rank(const PromptContext& ctx, const BiasProfile& profile, std::uint64_t seed) {
    const std::size_t j = ctx.slate.size();
    if (profile.planted_matrix.dim != j) {
        throw DimensionMismatch("bias profile dim " + std::to_string(profile.planted_matrix.dim) +
                                " != slate size " + std::to_string(j));
    }
    const std::size_t truth_pos = ctx.slate.truth_index
                                      ? *ctx.slate.truth_index
                                      : throw MissingTruth("simulated_rank needs a preferred item");
    Rng rng(seed);
    const auto& row = profile.planted_matrix.entries[truth_pos];
    const std::size_t top = rng.discrete(row);
    std::vector<std::size_t> tail;
    tail.reserve(j - 1);
    for (std::size_t p = 0; p < j; ++p) {
        if (p != top) tail.push_back(p);
    }
    if (profile.tail_rule == TailRule::uniform_random) rng.shuffle(tail);
    Ranking out;
    out.order.reserve(j);
    out.order.push_back(top);
    out.order.insert(out.order.end(), tail.begin(), tail.end());
    return out;
}

// A single fixed profile, or a profile family indexed by slate size (the
// candidate-size sweep needs matching dimensions per size).
class SimulatedBackend : public RankerBackend {
public:
    using ProfileFamily = std::function<BiasProfile(std::size_t)>;

    explicit SimulatedBackend(BiasProfile profile)
        : name_("simulated:" + profile.digest()) {
        const std::size_t dim = profile.planted_matrix.dim;
        profiles_.emplace(dim, std::move(profile));
        family_ = [dim](std::size_t j) -> BiasProfile {
            throw DimensionMismatch("fixed bias profile has dim " + std::to_string(dim) +
                                    ", slate size " + std::to_string(j));
        };
    }

    SimulatedBackend(std::string family_name, ProfileFamily family)
        : family_(std::move(family)), name_("simulated:" + std::move(family_name)) {}

    Ranking rank(const PromptContext& ctx, std::uint64_t seed) override {
        return simulated_rank(ctx, profile_for(ctx.slate.size()), seed);
    }

    std::string identity() const override { return name_; }

    const BiasProfile& profile_for(std::size_t j) {
        std::lock_guard lock(mutex_);
        auto it = profiles_.find(j);
        if (it == profiles_.end()) it = profiles_.emplace(j, family_(j)).first;
        return it->second;
    }

private:
    ProfileFamily family_;
    std::string name_;
    std::mutex mutex_;
    std::map<std::size_t, BiasProfile> profiles_;
};

inline std::unique_ptr<SimulatedBackend> make_simulated_backend(const std::string& profile_name) {
    if (profile_name == "canonical") {
        return std::make_unique<SimulatedBackend>("canonical",
                                                  [](std::size_t j) { return BiasProfile::canonical(j); });
    }
    if (profile_name == "truthful") {
        return std::make_unique<SimulatedBackend>("truthful",
                                                  [](std::size_t j) { return BiasProfile::truthful(j); });
    }
    if (profile_name == "uniform") {
        return std::make_unique<SimulatedBackend>("uniform",
                                                  [](std::size_t j) { return BiasProfile::uniform(j); });
    }
    if (profile_name == "degrading") {
        return std::make_unique<SimulatedBackend>("degrading",
                                                  [](std::size_t j) { return BiasProfile::degrading(j); });
    }
    throw ConfigError("unknown bias profile: " + profile_name);
}

struct Top1Distribution {
    std::vector<double> frequencies;  // sums to 1 over valid responses
    std::size_t valid = 0;
    std::size_t invalid = 0;
};

inline Top1Distribution empirical_top1_distribution(RankerBackend& backend,
                                                    const std::vector<PromptContext>& variants,
                                                    std::size_t n, std::uint64_t seed) {
    if (n < 1) throw Error("empirical_top1_distribution: n must be >= 1");
    if (variants.empty()) throw Error("empirical_top1_distribution: no contexts");
    const std::size_t j = variants.front().slate.size();
    std::vector<std::size_t> hits(j, 0);
    Top1Distribution out;
    for (std::size_t d = 0; d < n; ++d) {
        const auto& ctx = variants[d % variants.size()];
        try {
            Ranking r = backend.rank(ctx, derive_seed(seed, "top1", d));
            ++hits.at(r.top1());
            ++out.valid;
        } catch (const DecodeError&) {
            ++out.invalid;
        } catch (const InvalidAnswer&) {
            ++out.invalid;
        }
    }
    out.frequencies.assign(j, 0.0);
    if (out.valid > 0) {
        for (std::size_t p = 0; p < j; ++p) {
            out.frequencies[p] = static_cast<double>(hits[p]) / static_cast<double>(out.valid);
        }
    }
    return out;
}

}  // namespace stella
