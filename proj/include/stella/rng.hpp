#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stella/errors.hpp"

namespace stella {

// splitmix64; fixed across platforms so seeded runs are bit-reproducible.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a over bytes, used for cache keys and seed derivation.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Per-example sub-seed: digest(root_seed, tag, index). Order-independent
// across workers, stable across runs.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a_u64(root);
    h = fnv1a(tag, h);
    h = fnv1a_u64(index, h);
    std::uint64_t s = h;
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() { return splitmix64(state_); }

    // Unbiased draw in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Index drawn from an (unnormalized) nonnegative weight vector.
    std::size_t discrete(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) throw DegenerateLikelihood("discrete draw over all-zero weights");
        double u = uniform01() * total;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            if (u < weights[i]) return i;
            u -= weights[i];
        }
        return weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // k distinct indices from [0, n) in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(idx[i], idx[i + below(n - i)]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::uint64_t state_;
};

inline std::string hex_digest(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace stella
