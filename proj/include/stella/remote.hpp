#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "stella/errors.hpp"
#include "stella/prompting.hpp"
#include "stella/rankers.hpp"
#include "stella/rng.hpp"

namespace stella {

// Append-only JSON Lines response cache. A corrupt trailing line (interrupted
// write) is truncated on open with a warning; replay returns the stored
// response bytes without touching the network.
class ResponseCache {
public:
    explicit ResponseCache(std::string path) : path_(std::move(path)) { load(); }

    bool lookup(const std::string& key_digest, std::string& response) const {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(key_digest);
        if (it == entries_.end()) return false;
        response = it->second;
        return true;
    }

    void store(const std::string& key_digest, const nlohmann::json& request, const std::string& response) {
        std::lock_guard lock(mutex_);
        if (entries_.count(key_digest)) return;
        entries_[key_digest] = response;
        nlohmann::json line{{"format_version", 1},
                            {"key_digest", key_digest},
                            {"request", request},
                            {"response", response},
                            {"created_at", now_iso8601()}};
        std::ofstream f(path_, std::ios::app | std::ios::binary);
        if (!f) throw Error("cannot append to cache " + path_);
        f << line.dump() << '\n';
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

private:
    void load() {
        std::ifstream f(path_, std::ios::binary);
        if (!f) return;
        std::string line;
        std::vector<std::string> good_lines;
        bool corrupt_tail = false;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("key_digest") || !j.contains("response")) {
                corrupt_tail = true;
                break;
            }
            entries_[j["key_digest"].get<std::string>()] = j["response"].get<std::string>();
            good_lines.push_back(line);
        }
        if (corrupt_tail) {
            std::cerr << "warning: truncating corrupt trailing line in cache " << path_ << "\n";
            std::ofstream out(path_, std::ios::trunc | std::ios::binary);
            for (const auto& l : good_lines) out << l << '\n';
        }
    }

    static std::string now_iso8601() {
        const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::tm tm{};
        gmtime_r(&t, &tm);
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    std::string path_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::string> entries_;
};

struct RemoteConfig {
    std::string base_url;  // e.g. http://localhost:8080
    std::string model;
    double temperature = 0.7;
    std::string api_key_env = "STELLA_API_KEY";
    std::string system_message = "You are a helpful recommendation assistant.";
    std::string cache_path = "stella_cache.jsonl";
    std::size_t max_retries = 5;       // transport / 429
    std::size_t decode_attempts = 3;   // fresh samples before InvalidAnswer
    std::size_t max_in_flight = 4;
    double requests_per_minute = 0.0;  // 0 = unlimited
    int backoff_initial_ms = 250;      // doubles per retry
};

// Chat-completions client: POST {model, messages, temperature}, read the
// first choice's message content, decode to a Ranking. Every exchange is
// keyed by (backend identity, prompt bytes, temperature, attempt index).
class RemoteBackend : public RankerBackend {
public:
    explicit RemoteBackend(RemoteConfig cfg)
        : cfg_(std::move(cfg)), cache_(cfg_.cache_path) {
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        if (!key || !*key) {
            throw ConfigError("credential missing: set " + cfg_.api_key_env);
        }
        api_key_ = key;
    }

    std::string identity() const override { return "remote:" + cfg_.model + "@" + cfg_.base_url; }

    Ranking rank(const PromptContext& ctx, std::uint64_t /*seed*/) override {
        const std::string prompt = render_prompt(ctx);
        std::vector<std::string> failures;
        for (std::size_t attempt = 0; attempt < cfg_.decode_attempts; ++attempt) {
            const std::string content = fetch(prompt, attempt);
            try {
                return decode_output(content, ctx.slate, ctx.style.scheme);
            } catch (const DecodeError& e) {
                failures.push_back(e.raw_text);
            }
        }
        throw InvalidAnswer("no decodable answer after " + std::to_string(cfg_.decode_attempts) +
                                " attempts",
                            failures);
    }

    std::size_t network_requests() const { return network_requests_.load(); }
    const ResponseCache& cache() const { return cache_; }

private:
    std::string cache_key(const std::string& prompt, std::size_t attempt) const {
        std::uint64_t h = fnv1a(identity());
        h = fnv1a(prompt, h);
        h = fnv1a(detail::format_double(cfg_.temperature), h);
        h = fnv1a_u64(attempt, h);
        return hex_digest(h);
    }

    std::string fetch(const std::string& prompt, std::size_t attempt) {
        const std::string key = cache_key(prompt, attempt);
        std::string cached;
        if (cache_.lookup(key, cached)) return cached;

        nlohmann::json request{{"model", cfg_.model},
                               {"messages",
                                nlohmann::json::array({{{"role", "system"}, {"content", cfg_.system_message}},
                                                       {{"role", "user"}, {"content", prompt}}})},
                               {"temperature", cfg_.temperature}};
        const std::string content = post_with_retry(request);
        cache_.store(key, request, content);
        return content;
    }

    std::string post_with_retry(const nlohmann::json& request) {
        InFlightGuard guard(*this);
        int backoff_ms = cfg_.backoff_initial_ms;
        std::string last_error;
        for (std::size_t try_no = 0; try_no < cfg_.max_retries; ++try_no) {
            if (try_no > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms *= 2;
            }
            throttle();
            httplib::Client client(cfg_.base_url);
            client.set_read_timeout(120, 0);
            httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
            ++network_requests_;
            auto res = client.Post("/v1/chat/completions", headers, request.dump(), "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "http " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw TransportError("http " + std::to_string(res->status) + ": " + res->body);
            }
            auto body = nlohmann::json::parse(res->body, nullptr, false);
            if (body.is_discarded()) throw TransportError("unparsable response body");
            try {
                return body.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw TransportError(std::string("unexpected response shape: ") + e.what());
            }
        }
        if (last_error.rfind("http 429", 0) == 0) {
            throw RateLimited("gave up after " + std::to_string(cfg_.max_retries) + " tries: " + last_error);
        }
        throw TransportError("gave up after " + std::to_string(cfg_.max_retries) + " tries: " + last_error);
    }

    // Token bucket, refilled continuously at requests_per_minute.
    void throttle() {
        if (cfg_.requests_per_minute <= 0.0) return;
        std::unique_lock lock(throttle_mutex_);
        const auto now = std::chrono::steady_clock::now();
        const double rate_per_ms = cfg_.requests_per_minute / 60000.0;
        tokens_ += std::chrono::duration_cast<std::chrono::milliseconds>(now - last_refill_).count() *
                   rate_per_ms;
        tokens_ = std::min(tokens_, cfg_.requests_per_minute / 60.0 + 1.0);
        last_refill_ = now;
        if (tokens_ < 1.0) {
            const auto wait_ms = static_cast<long>((1.0 - tokens_) / rate_per_ms) + 1;
            lock.unlock();
            std::this_thread::sleep_for(std::chrono::milliseconds(wait_ms));
            lock.lock();
            tokens_ = 0.0;
            last_refill_ = std::chrono::steady_clock::now();
        } else {
            tokens_ -= 1.0;
        }
    }

    class InFlightGuard {
    public:
        explicit InFlightGuard(RemoteBackend& b) : b_(b) {
            std::unique_lock lock(b_.inflight_mutex_);
            b_.inflight_cv_.wait(lock, [&] { return b_.inflight_ < b_.cfg_.max_in_flight; });
            ++b_.inflight_;
        }
        ~InFlightGuard() {
            {
                std::lock_guard lock(b_.inflight_mutex_);
                --b_.inflight_;
            }
            b_.inflight_cv_.notify_one();
        }

    private:
        RemoteBackend& b_;
    };

    RemoteConfig cfg_;
    ResponseCache cache_;
    std::string api_key_;
    std::atomic<std::size_t> network_requests_{0};
    std::mutex throttle_mutex_;
    double tokens_ = 1.0;
    std::chrono::steady_clock::time_point last_refill_ = std::chrono::steady_clock::now();
    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    std::size_t inflight_ = 0;
};

}  // namespace stella
