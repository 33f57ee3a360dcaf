#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stella/errors.hpp"
#include "stella/rng.hpp"

namespace stella {

struct ItemRef {
    std::string id;     // unique within a dataset
    std::string title;  // non-empty after trimming

    friend bool operator==(const ItemRef&, const ItemRef&) = default;
};

enum class Label { positive, negative };

struct Interaction {
    ItemRef item;
    std::optional<double> rating;
    std::int64_t timestamp = 0;
    Label label = Label::negative;
};

struct UserHistory {
    std::string user_id;
    std::vector<Interaction> interactions;  // ascending by timestamp, stable

    void sort_by_timestamp() {
        std::stable_sort(interactions.begin(), interactions.end(),
                         [](const Interaction& a, const Interaction& b) {
                             return a.timestamp < b.timestamp;
                         });
    }

    std::vector<Interaction> positives() const {
        std::vector<Interaction> out;
        for (const auto& it : interactions) {
            if (it.label == Label::positive) out.push_back(it);
        }
        return out;
    }
};

constexpr std::size_t kMaxSlateSize = 26;  // letter labels cap
constexpr std::size_t kMaxEnumerableSlate = 8;

struct CandidateSlate {
    std::vector<ItemRef> items;  // 2 <= j <= 26, no duplicate ids
    std::optional<std::size_t> truth_index;
    std::optional<std::size_t> permutation_id;

    std::size_t size() const { return items.size(); }

    void validate() const {
        if (items.size() < 2 || items.size() > kMaxSlateSize) {
            throw Error("slate size must be in [2, 26], got " + std::to_string(items.size()));
        }
        std::set<std::string> ids;
        for (const auto& it : items) {
            if (!ids.insert(it.id).second) throw Error("duplicate item id in slate: " + it.id);
        }
        if (truth_index && *truth_index >= items.size()) {
            throw Error("truth_index out of range");
        }
    }

    const ItemRef& truth_item() const {
        if (!truth_index) throw MissingTruth("slate has no truth_index");
        return items[*truth_index];
    }
};

struct Ranking {
    std::vector<std::size_t> order;  // permutation of {0..j-1}

    std::size_t top1() const { return order.at(0); }

    bool is_permutation_of(std::size_t j) const {
        if (order.size() != j) return false;
        std::vector<bool> seen(j, false);
        for (auto p : order) {
            if (p >= j || seen[p]) return false;
            seen[p] = true;
        }
        return true;
    }
};

struct EvalRecord {
    std::string user_id;
    CandidateSlate slate;
    Ranking predicted;
    std::size_t truth_index = 0;
    double score = 0.0;  // {0,1} for Hit@1
};

namespace detail {

inline CandidateSlate rearrange(const CandidateSlate& base, const std::vector<std::size_t>& take,
                                std::optional<std::size_t> permutation_id) {
    CandidateSlate out;
    out.items.reserve(take.size());
    for (std::size_t src : take) out.items.push_back(base.items[src]);
    if (base.truth_index) {
        for (std::size_t t = 0; t < take.size(); ++t) {
            if (take[t] == *base.truth_index) out.truth_index = t;
        }
    }
    out.permutation_id = permutation_id;
    return out;
}

}  // namespace detail

// All j! arrangements, lexicographic in position indices. Guarded to j <= 8.
inline std::vector<CandidateSlate> permutations_of(const CandidateSlate& slate) {
    slate.validate();
    const std::size_t j = slate.size();
    if (j > kMaxEnumerableSlate) {
        throw SlateTooLarge("full enumeration limited to j <= 8, got " + std::to_string(j));
    }
    std::vector<std::size_t> idx(j);
    for (std::size_t i = 0; i < j; ++i) idx[i] = i;
    std::vector<CandidateSlate> out;
    std::size_t rank = 0;
    do {
        out.push_back(detail::rearrange(slate, idx, rank++));
    } while (std::next_permutation(idx.begin(), idx.end()));
    return out;
}

// j variants: variant i puts the truth item at position i, negatives keep
// their original relative order.
inline std::vector<CandidateSlate> truth_position_variants(const CandidateSlate& slate) {
    slate.validate();
    if (!slate.truth_index) throw MissingTruth("truth_position_variants needs truth_index");
    const std::size_t j = slate.size();
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < j; ++i) {
        if (i != *slate.truth_index) negatives.push_back(i);
    }
    std::vector<CandidateSlate> out;
    out.reserve(j);
    for (std::size_t pos = 0; pos < j; ++pos) {
        std::vector<std::size_t> take;
        take.reserve(j);
        take.insert(take.end(), negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(pos));
        take.push_back(*slate.truth_index);
        take.insert(take.end(), negatives.begin() + static_cast<std::ptrdiff_t>(pos), negatives.end());
        out.push_back(detail::rearrange(slate, take, pos));
    }
    return out;
}

// Shuffled slate plus the base->position map the calibration loop needs.
struct ShuffledSlate {
    CandidateSlate slate;
    std::vector<std::size_t> base_to_pos;  // base index -> shuffled position
    std::vector<std::size_t> pos_to_base;  // shuffled position -> base index
};

inline ShuffledSlate shuffle_slate_mapped(const CandidateSlate& slate, std::uint64_t seed) {
    slate.validate();
    const std::size_t j = slate.size();
    std::vector<std::size_t> take(j);
    for (std::size_t i = 0; i < j; ++i) take[i] = i;
    Rng rng(seed);
    rng.shuffle(take);
    ShuffledSlate out;
    out.slate = detail::rearrange(slate, take, std::nullopt);
    out.pos_to_base = take;
    out.base_to_pos.resize(j);
    for (std::size_t pos = 0; pos < j; ++pos) out.base_to_pos[take[pos]] = pos;
    return out;
}

inline CandidateSlate shuffle_slate(const CandidateSlate& slate, std::uint64_t seed) {
    return shuffle_slate_mapped(slate, seed).slate;
}

}  // namespace stella
