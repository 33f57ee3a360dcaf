#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "stella/rankers.hpp"

using namespace stella;
using stella::test::make_ctx;
using stella::test::make_slate;

TEST_CASE("simulated_rank with identity profile always ranks the truth first") {
    auto profile = BiasProfile::truthful(4);
    auto ctx = make_ctx(make_slate(4, 2));
    for (std::uint64_t s = 0; s < 100; ++s) {
        auto r = simulated_rank(ctx, profile, s);
        REQUIRE(r.top1() == 2);
        REQUIRE(r.is_permutation_of(4));
    }
}

TEST_CASE("simulated_rank is deterministic per seed") {
    auto profile = BiasProfile::canonical(5);
    auto ctx = make_ctx(make_slate(5, 1));
    auto a = simulated_rank(ctx, profile, 77);
    auto b = simulated_rank(ctx, profile, 77);
    REQUIRE(a.order == b.order);
}

TEST_CASE("simulated_rank uniform row has uniform empirical top-1 frequencies") {
    auto profile = BiasProfile::uniform(4);
    auto ctx = make_ctx(make_slate(4, 0));
    std::vector<std::size_t> hits(4, 0);
    const std::size_t n = 10000;
    for (std::size_t s = 0; s < n; ++s) {
        ++hits[simulated_rank(ctx, profile, derive_seed(3, "mc", s)).top1()];
    }
    for (auto h : hits) {
        CHECK(static_cast<double>(h) / n == Catch::Approx(0.25).margin(0.03));
    }
}

TEST_CASE("simulated_rank checks dimensions and truth presence") {
    auto profile = BiasProfile::canonical(5);
    CHECK_THROWS_AS(simulated_rank(make_ctx(make_slate(4, 0)), profile, 1), DimensionMismatch);
    auto ctx = make_ctx(make_slate(5));
    ctx.slate.truth_index.reset();
    CHECK_THROWS_AS(simulated_rank(ctx, profile, 1), MissingTruth);
}

TEST_CASE("position_order tail rule fills the rest ascending") {
    BiasProfile profile = BiasProfile::truthful(5);
    auto r = simulated_rank(make_ctx(make_slate(5, 2)), profile, 9);
    REQUIRE(r.order == std::vector<std::size_t>{2, 0, 1, 3, 4});
}

TEST_CASE("empirical_top1_distribution: identity profile concentrates at the truth") {
    SimulatedBackend backend(BiasProfile::truthful(3));
    std::vector<PromptContext> variants{make_ctx(make_slate(3, 0))};
    auto d = empirical_top1_distribution(backend, variants, 100, 5);
    REQUIRE(d.valid == 100);
    REQUIRE(d.invalid == 0);
    CHECK(d.frequencies[0] == 1.0);
    CHECK(d.frequencies[1] == 0.0);
}

TEST_CASE("empirical_top1_distribution: uniform profile near 1/j") {
    SimulatedBackend backend(BiasProfile::uniform(5));
    std::vector<PromptContext> variants{make_ctx(make_slate(5, 1))};
    auto d = empirical_top1_distribution(backend, variants, 10000, 11);
    double sum = 0.0;
    for (double f : d.frequencies) {
        CHECK(f == Catch::Approx(0.2).margin(0.03));
        sum += f;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    CHECK_THROWS_AS(empirical_top1_distribution(backend, variants, 0, 1), Error);
}

TEST_CASE("oracle fidelity: empirical confusion matrix converges to the planted matrix") {
    const std::size_t j = 4;
    auto profile = BiasProfile::canonical(j);
    const std::size_t n = 4000;
    // Hoeffding: max cell error <= sqrt(ln(2 j^2 / 0.05) / (2n)) w.p. 95%
    const double bound = std::sqrt(std::log(2.0 * j * j / 0.05) / (2.0 * n));
    for (std::size_t truth = 0; truth < j; ++truth) {
        auto ctx = make_ctx(make_slate(j, truth));
        std::vector<double> freq(j, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            freq[simulated_rank(ctx, profile, derive_seed(31, "fidelity", truth * n + s)).top1()] += 1.0;
        }
        for (std::size_t y = 0; y < j; ++y) {
            CHECK(std::abs(freq[y] / n - profile.planted_matrix.entries[truth][y]) <= bound);
        }
    }
}

TEST_CASE("profile families produce row-stochastic matrices at any size") {
    for (std::size_t j : {2, 3, 5, 10, 25}) {
        CHECK_NOTHROW(BiasProfile::canonical(j).planted_matrix.validate());
        CHECK_NOTHROW(BiasProfile::degrading(j).planted_matrix.validate());
        CHECK_NOTHROW(BiasProfile::uniform(j).planted_matrix.validate());
    }
}

TEST_CASE("family backend serves multiple slate sizes, fixed backend rejects them") {
    auto family = make_simulated_backend("canonical");
    CHECK_NOTHROW(family->rank(make_ctx(make_slate(3, 0)), 1));
    CHECK_NOTHROW(family->rank(make_ctx(make_slate(7, 0)), 1));
    SimulatedBackend fixed(BiasProfile::canonical(5));
    CHECK_NOTHROW(fixed.rank(make_ctx(make_slate(5, 0)), 1));
    CHECK_THROWS_AS(fixed.rank(make_ctx(make_slate(4, 0)), 1), DimensionMismatch);
}
