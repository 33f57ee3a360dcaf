#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "stella/calibration.hpp"
#include "stella/errors.hpp"
#include "stella/prompting.hpp"
#include "stella/remote.hpp"
#include "stella/rng.hpp"

namespace stella {

struct RunConfig {
    std::string backend = "simulated";  // simulated | remote
    RemoteConfig remote;
    std::size_t candidate_size = 5;
    std::size_t num_negatives = 4;
    std::size_t m = 5;
    CalibrationConfig calibration;
    PromptStyle style;
    std::string dataset_path;
    std::uint64_t seed = 0;
    std::size_t parallelism = 1;
    std::size_t max_users = 200;
    std::size_t bootstrap_repeats = 3;
    std::string out_dir = "out";
    std::string bias_profile = "canonical";  // simulated backend: canonical|truthful|uniform

    void validate() const {
        if (backend != "simulated" && backend != "remote") {
            throw ConfigError("backend must be simulated or remote");
        }
        if (candidate_size != num_negatives + 1) {
            throw ConfigError("candidate_size must equal num_negatives + 1");
        }
        if (candidate_size < 2 || candidate_size > 26) throw ConfigError("candidate_size out of [2, 26]");
        if (parallelism < 1 || m < 1 || bootstrap_repeats < 1) {
            throw ConfigError("parallelism, m and bootstrap_repeats must be positive");
        }
        calibration.validate();
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    return nlohmann::json{
        {"format_version", 1},
        {"backend", c.backend},
        {"bias_profile", c.bias_profile},
        {"remote",
         {{"base_url", c.remote.base_url},
          {"model", c.remote.model},
          {"temperature", c.remote.temperature},
          {"cache_path", c.remote.cache_path},
          {"max_retries", c.remote.max_retries},
          {"decode_attempts", c.remote.decode_attempts},
          {"max_in_flight", c.remote.max_in_flight},
          {"requests_per_minute", c.remote.requests_per_minute}}},
        {"candidate_size", c.candidate_size},
        {"num_negatives", c.num_negatives},
        {"m", c.m},
        {"calibration",
         {{"max_iterations", c.calibration.max_iterations},
          {"entropy_epsilon", c.calibration.entropy_epsilon},
          {"consecutive_stable", c.calibration.consecutive_stable},
          {"aggregation_k", c.calibration.aggregation_k},
          {"aggregate_source", c.calibration.aggregate_raw ? "raw" : "posterior"}}},
        {"prompt",
         {{"task_description", c.style.task_description},
          {"item_noun", c.style.item_noun},
          {"history_noun", c.style.history_noun},
          {"scheme", to_string(c.style.scheme)},
          {"max_history", c.style.max_history}}},
        {"dataset_path", c.dataset_path},
        {"seed", c.seed},
        {"parallelism", c.parallelism},
        {"max_users", c.max_users},
        {"bootstrap_repeats", c.bootstrap_repeats},
        {"out_dir", c.out_dir}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        c.backend = j.value("backend", c.backend);
        c.bias_profile = j.value("bias_profile", c.bias_profile);
        if (j.contains("remote")) {
            const auto& r = j["remote"];
            c.remote.base_url = r.value("base_url", c.remote.base_url);
            c.remote.model = r.value("model", c.remote.model);
            c.remote.temperature = r.value("temperature", c.remote.temperature);
            c.remote.cache_path = r.value("cache_path", c.remote.cache_path);
            c.remote.max_retries = r.value("max_retries", c.remote.max_retries);
            c.remote.decode_attempts = r.value("decode_attempts", c.remote.decode_attempts);
            c.remote.max_in_flight = r.value("max_in_flight", c.remote.max_in_flight);
            c.remote.requests_per_minute = r.value("requests_per_minute", c.remote.requests_per_minute);
        }
        c.candidate_size = j.value("candidate_size", c.candidate_size);
        c.num_negatives = j.value("num_negatives", c.num_negatives);
        c.m = j.value("m", c.m);
        if (j.contains("calibration")) {
            const auto& k = j["calibration"];
            c.calibration.max_iterations = k.value("max_iterations", c.calibration.max_iterations);
            c.calibration.entropy_epsilon = k.value("entropy_epsilon", c.calibration.entropy_epsilon);
            c.calibration.consecutive_stable = k.value("consecutive_stable", c.calibration.consecutive_stable);
            c.calibration.aggregation_k = k.value("aggregation_k", c.calibration.aggregation_k);
            c.calibration.aggregate_raw = k.value("aggregate_source", "posterior") == "raw";
        }
        if (j.contains("prompt")) {
            const auto& p = j["prompt"];
            c.style.task_description = p.value("task_description", c.style.task_description);
            c.style.item_noun = p.value("item_noun", c.style.item_noun);
            c.style.history_noun = p.value("history_noun", c.style.history_noun);
            if (p.contains("scheme")) c.style.scheme = label_scheme_from_string(p["scheme"].get<std::string>());
            c.style.max_history = p.value("max_history", c.style.max_history);
        }
        c.dataset_path = j.value("dataset_path", c.dataset_path);
        c.seed = j.value("seed", c.seed);
        c.parallelism = j.value("parallelism", c.parallelism);
        c.max_users = j.value("max_users", c.max_users);
        c.bootstrap_repeats = j.value("bootstrap_repeats", c.bootstrap_repeats);
        c.out_dir = j.value("out_dir", c.out_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    c.validate();
    return c;
}

inline std::string serialize_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config file not found: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    auto j = nlohmann::json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
    return run_config_from_json(j);
}

inline std::string params_digest(const RunConfig& c) {
    return hex_digest(fnv1a(serialize_config(c)));
}

}  // namespace stella
