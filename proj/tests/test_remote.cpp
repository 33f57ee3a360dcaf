#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "helpers.hpp"
#include "stella/remote.hpp"

using namespace stella;
using stella::test::make_ctx;
using stella::test::make_slate;

namespace {

constexpr const char* kTestKeyEnv = "STELLA_API_KEY";

struct EnvKey {
    EnvKey() { setenv(kTestKeyEnv, "test-key-123", 1); }
    ~EnvKey() { unsetenv(kTestKeyEnv); }
};

std::string chat_body(const std::string& content) {
    nlohmann::json j{{"choices", nlohmann::json::array({{{"message", {{"content", content}}}}})}};
    return j.dump();
}

// Minimal chat-completions stand-in; the handler decides status and body per
// request, in arrival order.
struct TestServer {
    httplib::Server svr;
    int port = 0;
    std::thread th;
    std::atomic<int> hits{0};
    std::string last_auth;
    nlohmann::json last_request;

    explicit TestServer(std::function<std::pair<int, std::string>(int hit)> responder) {
        svr.Post("/v1/chat/completions", [this, responder](const httplib::Request& req,
                                                           httplib::Response& res) {
            const int n = hits.fetch_add(1);
            last_auth = req.get_header_value("Authorization");
            last_request = nlohmann::json::parse(req.body, nullptr, false);
            auto [status, body] = responder(n);
            res.status = status;
            res.set_content(body, "application/json");
        });
        port = svr.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        th = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }

    ~TestServer() {
        svr.stop();
        th.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

RemoteConfig make_config(const TestServer& server, const std::string& tag) {
    RemoteConfig cfg;
    cfg.base_url = server.url();
    cfg.model = "test-model";
    cfg.cache_path =
        (std::filesystem::temp_directory_path() / ("stella_cache_" + tag + ".jsonl")).string();
    std::filesystem::remove(cfg.cache_path);
    cfg.backoff_initial_ms = 1;
    return cfg;
}

}  // namespace

TEST_CASE("remote backend refuses to start without the credential") {
    unsetenv(kTestKeyEnv);
    RemoteConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.cache_path = (std::filesystem::temp_directory_path() / "stella_cache_nokey.jsonl").string();
    CHECK_THROWS_AS(RemoteBackend(cfg), ConfigError);
}

TEST_CASE("remote backend retries 429 with backoff, then succeeds") {
    EnvKey key;
    TestServer server([](int hit) -> std::pair<int, std::string> {
        if (hit < 2) return {429, "slow down"};
        return {200, chat_body(R"({"rank_order":["B","A","C"]})")};
    });
    RemoteBackend backend(make_config(server, "retry"));
    auto r = backend.rank(make_ctx(make_slate(3)), 0);
    REQUIRE(r.order == std::vector<std::size_t>{1, 0, 2});
    CHECK(backend.network_requests() == 3);
    CHECK(server.last_auth == "Bearer test-key-123");
    // wire shape: model + messages + temperature
    REQUIRE(server.last_request.contains("model"));
    REQUIRE(server.last_request.contains("temperature"));
    REQUIRE(server.last_request.at("messages").size() == 2);
    CHECK(server.last_request.at("messages").at(1).at("role") == "user");
}

TEST_CASE("remote backend gives up after max_retries of 429") {
    EnvKey key;
    TestServer server([](int) -> std::pair<int, std::string> { return {429, "no"}; });
    RemoteBackend backend(make_config(server, "ratelimit"));
    CHECK_THROWS_AS(backend.rank(make_ctx(make_slate(3)), 0), RateLimited);
    CHECK(backend.network_requests() == 5);
}

TEST_CASE("remote backend does not retry a hard client error") {
    EnvKey key;
    TestServer server([](int) -> std::pair<int, std::string> { return {404, "gone"}; });
    RemoteBackend backend(make_config(server, "hard404"));
    CHECK_THROWS_AS(backend.rank(make_ctx(make_slate(3)), 0), TransportError);
    CHECK(backend.network_requests() == 1);
}

TEST_CASE("cache replay answers repeats and restarts without the network") {
    EnvKey key;
    TestServer server([](int) -> std::pair<int, std::string> {
        return {200, chat_body(R"({"rank_order":["C","B","A"]})")};
    });
    auto cfg = make_config(server, "replay");
    auto ctx = make_ctx(make_slate(3));
    {
        RemoteBackend backend(cfg);
        REQUIRE(backend.rank(ctx, 0).order == std::vector<std::size_t>{2, 1, 0});
        CHECK(backend.network_requests() == 1);
        REQUIRE(backend.rank(ctx, 0).order == std::vector<std::size_t>{2, 1, 0});
        CHECK(backend.network_requests() == 1);  // second call served from cache
    }
    // a fresh process replays from the cache file
    RemoteBackend again(cfg);
    REQUIRE(again.rank(ctx, 0).order == std::vector<std::size_t>{2, 1, 0});
    CHECK(again.network_requests() == 0);
    std::filesystem::remove(cfg.cache_path);
}

TEST_CASE("three undecodable samples raise InvalidAnswer carrying the raw texts") {
    EnvKey key;
    TestServer server([](int hit) -> std::pair<int, std::string> {
        return {200, chat_body("garbage answer #" + std::to_string(hit))};
    });
    RemoteBackend backend(make_config(server, "undecodable"));
    try {
        backend.rank(make_ctx(make_slate(3)), 0);
        FAIL("expected InvalidAnswer");
    } catch (const InvalidAnswer& e) {
        REQUIRE(e.raw_texts.size() == 3);
        CHECK(e.raw_texts[0] == "garbage answer #0");
        CHECK(e.raw_texts[2] == "garbage answer #2");
    }
    CHECK(backend.network_requests() == 3);  // each attempt is a fresh sample
}

TEST_CASE("response cache truncates a corrupt trailing line") {
    const auto path = std::filesystem::temp_directory_path() / "stella_cache_corrupt.jsonl";
    {
        std::ofstream f(path, std::ios::trunc | std::ios::binary);
        f << nlohmann::json{{"format_version", 1},
                            {"key_digest", "abc"},
                            {"request", nlohmann::json::object()},
                            {"response", "ok"}}
                 .dump()
          << '\n';
        f << "{\"key_digest\":\"def\",\"resp";  // interrupted write
    }
    ResponseCache cache(path.string());
    REQUIRE(cache.size() == 1);
    std::string out;
    REQUIRE(cache.lookup("abc", out));
    CHECK(out == "ok");
    CHECK_FALSE(cache.lookup("def", out));
    // the file itself was repaired
    std::ifstream f(path, std::ios::binary);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(f, line)) {
        REQUIRE_FALSE(nlohmann::json::parse(line, nullptr, false).is_discarded());
        ++lines;
    }
    REQUIRE(lines == 1);
    std::filesystem::remove(path);
}
