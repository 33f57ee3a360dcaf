#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "helpers.hpp"
#include "stella/app.hpp"

using namespace stella;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    auto p = fs::temp_directory_path() / "stella_app_test";
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    REQUIRE(f.good());
    f << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(STELLA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// the params digest hashes the whole config, including out_dir, so drop it
// when comparing runs that only differ in their output location
std::string strip_digest(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
        const auto comma = line.find_last_of(',');
        out += comma == std::string::npos ? line : line.substr(0, comma);
        out += '\n';
    }
    return out;
}

std::string interaction_line(const std::string& user, const std::string& item, double rating,
                             std::int64_t ts, const char* label = nullptr) {
    nlohmann::json j{{"user_id", user}, {"item_id", item}, {"title", "Title " + item},
                     {"rating", rating}, {"timestamp", ts}};
    if (label) j["label"] = label;
    return j.dump() + "\n";
}

}  // namespace

TEST_CASE("run config serializes canonically and round-trips byte for byte") {
    RunConfig cfg;
    cfg.dataset_path = "data/toy_books.jsonl";
    cfg.seed = 17;
    cfg.calibration.aggregate_raw = true;
    cfg.style.scheme = LabelScheme::arabic_numerals;
    const std::string a = serialize_config(cfg);
    auto parsed = run_config_from_json(nlohmann::json::parse(a));
    const std::string b = serialize_config(parsed);
    REQUIRE(a == b);
    CHECK(parsed.calibration.aggregate_raw);
    CHECK(parsed.style.scheme == LabelScheme::arabic_numerals);
    CHECK(params_digest(cfg) == params_digest(parsed));
}

TEST_CASE("run config validation") {
    RunConfig cfg;
    cfg.candidate_size = 6;  // != num_negatives + 1
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.candidate_size = 5;
    cfg.backend = "quantum";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    const auto bad = scratch_dir() / "bad.json";
    write_file(bad, "{not json");
    CHECK_THROWS_AS(load_config(bad.string()), ConfigError);
}

TEST_CASE("ingest applies the rating threshold and label overrides") {
    const auto path = scratch_dir() / "mini.jsonl";
    std::string data;
    data += interaction_line("u1", "i1", 4.0, 1);             // positive: rating > 3
    data += interaction_line("u1", "i2", 3.0, 2);             // negative: not strictly above
    data += interaction_line("u1", "i3", 1.0, 3, "positive"); // label overrides rating
    data += interaction_line("u2", "i4", 5.0, 1);
    write_file(path, data);
    IngestStats stats;
    auto users = ingest(path.string(), 3.0, &stats);
    REQUIRE(users.size() == 2);
    CHECK(stats.positives == 3);
    auto positives = users.at("u1").positives();
    REQUIRE(positives.size() == 2);
    CHECK(positives[0].item.id == "i1");
    CHECK(positives[1].item.id == "i3");
}

TEST_CASE("ingest sorts interactions by timestamp") {
    const auto path = scratch_dir() / "unsorted.jsonl";
    write_file(path, interaction_line("u1", "late", 4.0, 50) + interaction_line("u1", "early", 4.0, 10));
    auto users = ingest(path.string());
    REQUIRE(users.at("u1").interactions[0].item.id == "early");
}

TEST_CASE("ingest rejects empty and heavily malformed files") {
    const auto empty = scratch_dir() / "empty.jsonl";
    write_file(empty, "");
    CHECK_THROWS_AS(ingest(empty.string()), SchemaError);

    const auto broken = scratch_dir() / "broken.jsonl";
    write_file(broken, interaction_line("u1", "i1", 4.0, 1) + "this is not json\n");
    CHECK_THROWS_AS(ingest(broken.string()), TooManyMalformed);

    // a single bad line in a large file is tolerated and counted
    const auto mostly = scratch_dir() / "mostly.jsonl";
    std::string data = "oops\n";
    for (int i = 0; i < 200; ++i) data += interaction_line("u1", "i" + std::to_string(i), 4.0, i);
    write_file(mostly, data);
    IngestStats stats;
    CHECK_NOTHROW(ingest(mostly.string(), 3.0, &stats));
    CHECK(stats.malformed == 1);
}

TEST_CASE("toy dataset is deterministic and probe-ready") {
    REQUIRE(toy_dataset_jsonl() == toy_dataset_jsonl());
    const auto path = scratch_dir() / "toy.jsonl";
    write_toy_dataset(path.string());
    auto users = ingest(path.string());
    REQUIRE(users.size() == 50);
    for (const auto& [_, u] : users) {
        REQUIRE(u.positives().size() >= 8);  // enough for m=5 probing plus the held-out item
    }
}

TEST_CASE("cli: help and bad arguments") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("definitely-not-a-command") == 2);
}

TEST_CASE("cli: evaluate produces artifacts and is reproducible") {
    const auto dir = scratch_dir() / "cli_eval";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto dataset = dir / "toy.jsonl";
    write_toy_dataset(dataset.string(), 20, 120, 7);

    RunConfig cfg;
    cfg.dataset_path = dataset.string();
    cfg.max_users = 6;
    cfg.m = 3;
    cfg.parallelism = 2;
    cfg.seed = 5;
    cfg.out_dir = (dir / "out_a").string();
    write_file(dir / "cfg_a.json", serialize_config(cfg));
    cfg.out_dir = (dir / "out_b").string();
    write_file(dir / "cfg_b.json", serialize_config(cfg));

    REQUIRE(run_cli("evaluate --config " + (dir / "cfg_a.json").string()) == 0);
    REQUIRE(fs::exists(dir / "out_a" / "results.csv"));
    REQUIRE(fs::exists(dir / "out_a" / "methods.svg"));
    REQUIRE(fs::exists(dir / "out_a" / "transition_matrix.csv"));

    REQUIRE(run_cli("evaluate --config " + (dir / "cfg_b.json").string()) == 0);
    const auto results_a = strip_digest(read_file(dir / "out_a" / "results.csv"));
    CHECK(results_a == strip_digest(read_file(dir / "out_b" / "results.csv")));
    CHECK(read_file(dir / "out_a" / "methods.svg") == read_file(dir / "out_b" / "methods.svg"));
    CHECK(results_a.rfind("# format_version=1\n", 0) == 0);

    // probe first, then evaluate against the saved matrix: same headline rows
    cfg.out_dir = (dir / "out_c").string();
    write_file(dir / "cfg_c.json", serialize_config(cfg));
    REQUIRE(run_cli("probe --config " + (dir / "cfg_c.json").string()) == 0);
    REQUIRE(run_cli("evaluate --config " + (dir / "cfg_c.json").string() + " --tm " +
                    (dir / "out_c" / "transition_matrix.csv").string()) == 0);
    CHECK(strip_digest(read_file(dir / "out_c" / "results.csv")) == results_a);
}

TEST_CASE("cli: ingest reports dataset statistics") {
    const auto dir = scratch_dir() / "cli_ingest";
    fs::create_directories(dir);
    const auto dataset = dir / "toy.jsonl";
    write_toy_dataset(dataset.string(), 10, 80, 3);
    RunConfig cfg;
    cfg.dataset_path = dataset.string();
    write_file(dir / "cfg.json", serialize_config(cfg));
    CHECK(run_cli("ingest --config " + (dir / "cfg.json").string()) == 0);
}

TEST_CASE("cli: remote backend without the credential exits with a config error") {
    unsetenv("STELLA_API_KEY");
    const auto dir = scratch_dir() / "cli_remote";
    fs::create_directories(dir);
    const auto dataset = dir / "toy.jsonl";
    write_toy_dataset(dataset.string(), 5, 60, 1);
    RunConfig cfg;
    cfg.backend = "remote";
    cfg.remote.base_url = "http://127.0.0.1:9";
    cfg.remote.model = "test-model";
    cfg.remote.cache_path = (dir / "cache.jsonl").string();
    cfg.dataset_path = dataset.string();
    write_file(dir / "cfg.json", serialize_config(cfg));
    CHECK(run_cli("evaluate --config " + (dir / "cfg.json").string()) == 2);
}

TEST_CASE("cmd_calibrate traces and reports on the first example") {
    const auto dir = scratch_dir() / "calibrate_cmd";
    fs::create_directories(dir);
    const auto dataset = dir / "toy.jsonl";
    write_toy_dataset(dataset.string(), 8, 80, 2);
    RunConfig cfg;
    cfg.dataset_path = dataset.string();
    cfg.max_users = 4;
    cfg.m = 3;
    std::ostringstream log;
    REQUIRE(stella::app::cmd_calibrate(cfg, log) == 0);
    CHECK(log.str().find("final_ranking:") != std::string::npos);
    CHECK(log.str().find("\"entropy\"") != std::string::npos);
}
