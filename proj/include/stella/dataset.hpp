#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stella/domain.hpp"
#include "stella/errors.hpp"
#include "stella/rng.hpp"

namespace stella {

struct IngestStats {
    std::size_t lines = 0;
    std::size_t malformed = 0;
    std::size_t users = 0;
    std::size_t positives = 0;
};

// JSON Lines, one interaction per line: user_id, item_id, title, rating
// (optional), label (optional), timestamp. An explicit label overrides the
// rating threshold.
inline std::map<std::string, UserHistory> ingest(const std::string& path, double rating_threshold = 3.0,
                                                 IngestStats* stats = nullptr) {
    std::ifstream f(path);
    if (!f) throw FileNotFound("dataset not found: " + path);
    std::map<std::string, UserHistory> users;
    IngestStats local;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++local.lines;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("user_id") || !j.contains("item_id") ||
            !j.contains("title") || !j.contains("timestamp")) {
            ++local.malformed;
            continue;
        }
        try {
            Interaction it;
            it.item.id = j.at("item_id").get<std::string>();
            it.item.title = j.at("title").get<std::string>();
            it.timestamp = j.at("timestamp").get<std::int64_t>();
            if (j.contains("rating") && !j.at("rating").is_null()) {
                it.rating = j.at("rating").get<double>();
            }
            if (j.contains("label") && !j.at("label").is_null()) {
                it.label = j.at("label").get<std::string>() == "positive" ? Label::positive : Label::negative;
            } else if (it.rating) {
                it.label = *it.rating > rating_threshold ? Label::positive : Label::negative;
            } else {
                ++local.malformed;
                continue;
            }
            if (it.item.title.empty() || it.item.id.empty()) {
                ++local.malformed;
                continue;
            }
            auto& user = users[j.at("user_id").get<std::string>()];
            user.user_id = j.at("user_id").get<std::string>();
            user.interactions.push_back(std::move(it));
            if (user.interactions.back().label == Label::positive) ++local.positives;
        } catch (const nlohmann::json::exception&) {
            ++local.malformed;
        }
    }
    if (local.lines == 0) throw SchemaError("dataset is empty: " + path);
    if (local.malformed * 100 > local.lines) {
        throw TooManyMalformed(std::to_string(local.malformed) + " of " + std::to_string(local.lines) +
                               " lines malformed (>1%)");
    }
    for (auto& [_, user] : users) user.sort_by_timestamp();
    local.users = users.size();
    if (stats) *stats = local;
    return users;
}

// Every item in the dataset the user never interacted with positively.
inline std::vector<ItemRef> negative_pool_for(const std::map<std::string, UserHistory>& users,
                                              const std::string& user_id) {
    std::set<std::string> positive_ids;
    if (auto it = users.find(user_id); it != users.end()) {
        for (const auto& inter : it->second.positives()) positive_ids.insert(inter.item.id);
    }
    std::map<std::string, ItemRef> catalog;
    for (const auto& [_, user] : users) {
        for (const auto& inter : user.interactions) catalog.emplace(inter.item.id, inter.item);
    }
    std::vector<ItemRef> pool;
    for (const auto& [id, item] : catalog) {
        if (!positive_ids.count(id)) pool.push_back(item);
    }
    return pool;
}

// Deterministic synthetic dataset: `n_users` readers over a titled catalog,
// enough positives per user for probing (m=5) plus the held-out item.
inline std::string toy_dataset_jsonl(std::size_t n_users = 50, std::size_t catalog_size = 200,
                                     std::uint64_t seed = 7) {
    static const char* adjectives[] = {"Silent", "Crimson", "Forgotten", "Electric", "Hollow",
                                       "Golden",  "Restless", "Distant",   "Paper",    "Winter"};
    static const char* nouns[] = {"Garden", "Archive", "Harbor", "Orchard", "Mirror",
                                  "Signal", "Compass", "Lantern", "Meridian", "Voyage"};
    std::vector<ItemRef> catalog;
    for (std::size_t i = 0; i < catalog_size; ++i) {
        ItemRef item;
        item.id = "b" + std::to_string(i);
        item.title = std::string(adjectives[i % 10]) + " " + nouns[(i / 10) % 10] + " Vol. " +
                     std::to_string(i / 100 + 1) + "." + std::to_string(i % 100);
        catalog.push_back(std::move(item));
    }
    std::string out;
    for (std::size_t u = 0; u < n_users; ++u) {
        Rng rng(derive_seed(seed, "toy_user", u));
        const std::size_t n_inter = 12 + rng.below(9);
        auto picks = rng.sample_without_replacement(catalog.size(), n_inter);
        for (std::size_t k = 0; k < n_inter; ++k) {
            const auto& item = catalog[picks[k]];
            const double rating = 1.0 + static_cast<double>(rng.below(5));
            nlohmann::json line{{"user_id", "u" + std::to_string(u)},
                                {"item_id", item.id},
                                {"title", item.title},
                                {"rating", k < 8 ? 4.0 + static_cast<double>(rng.below(2)) : rating},
                                {"timestamp", static_cast<std::int64_t>(1600000000 + 86400 * k)}};
            out += line.dump();
            out += '\n';
        }
    }
    return out;
}

inline void write_toy_dataset(const std::string& path, std::size_t n_users = 50,
                              std::size_t catalog_size = 200, std::uint64_t seed = 7) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << toy_dataset_jsonl(n_users, catalog_size, seed);
}

}  // namespace stella
