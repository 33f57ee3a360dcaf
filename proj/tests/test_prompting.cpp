#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "stella/prompting.hpp"
#include "stella/rng.hpp"

using namespace stella;
using stella::test::make_ctx;
using stella::test::make_slate;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

PromptContext golden_context() {
    PromptContext ctx;
    ctx.history_titles = {
        "Inferno", "An Abundance of katherines", "The Son", "Joyland",
        "The Guns at Last Light: The War in Western Europe, 1944-1945 (Liberation Trilogy)"};
    ctx.slate.items = {
        {"b1",
         "No Easy Day: The Autobiography of a Navy Seal: The Firsthand Account of the Mission That "
         "Killed Osama Bin Laden"},
        {"b2", "The Execution of Noa P. Singleton: A Novel"},
        {"b3", "Allegiant"},
        {"b4", "The Geography of Bliss: One Grump's Search for the Happiest Places in the World"},
        {"b5", "Billy Lynn's Long HalTableime Walk: A Novel"}};
    return ctx;
}

}  // namespace

TEST_CASE("labels_for covers every scheme") {
    CHECK(labels_for(LabelScheme::uppercase_letters, 3) == std::vector<std::string>{"A", "B", "C"});
    CHECK(labels_for(LabelScheme::lowercase_letters, 2) == std::vector<std::string>{"a", "b"});
    CHECK(labels_for(LabelScheme::arabic_numerals, 3) == std::vector<std::string>{"1", "2", "3"});
    CHECK(labels_for(LabelScheme::plain_list, 2) ==
          std::vector<std::string>{"Candidate 1", "Candidate 2"});
    CHECK(labels_for(LabelScheme::roman_numerals, 4) == std::vector<std::string>{"I", "II", "III", "IV"});
    CHECK(labels_for(LabelScheme::greek_letters, 3) == std::vector<std::string>{"α", "β", "γ"});
    CHECK(labels_for(LabelScheme::none, 2) == std::vector<std::string>{"", ""});
}

TEST_CASE("labels_for rejects alphabet overflow") {
    CHECK_THROWS_AS(labels_for(LabelScheme::uppercase_letters, 27), SchemeOverflow);
    CHECK_THROWS_AS(labels_for(LabelScheme::greek_letters, 25), SchemeOverflow);
    CHECK_THROWS_AS(labels_for(LabelScheme::roman_numerals, 4000), SchemeOverflow);
    CHECK_NOTHROW(labels_for(LabelScheme::arabic_numerals, 5000));
}

TEST_CASE("render_prompt reproduces the golden prompt byte for byte") {
    const auto rendered = render_prompt(golden_context());
    const auto golden = read_file(std::string(STELLA_TEST_DIR) + "/golden/book_prompt.txt");
    REQUIRE(rendered == golden);
}

TEST_CASE("render_prompt is deterministic") {
    auto ctx = make_ctx(make_slate(4));
    REQUIRE(render_prompt(ctx) == render_prompt(ctx));
}

TEST_CASE("render_prompt with arabic numerals labels lines (1) (2)") {
    PromptContext ctx;
    ctx.style.scheme = LabelScheme::arabic_numerals;
    ctx.history_titles = {"Only History"};
    ctx.slate = make_slate(2);
    const auto text = render_prompt(ctx);
    CHECK(text.find("\n(1) Title 0,\n") != std::string::npos);
    CHECK(text.find("\n(2) Title 1.\n") != std::string::npos);
}

TEST_CASE("render_prompt scheme none has unlabeled candidate lines") {
    auto ctx = make_ctx(make_slate(3), LabelScheme::none);
    const auto text = render_prompt(ctx);
    CHECK(text.find("\nTitle 0,\n") != std::string::npos);
    CHECK(text.find("(A)") == std::string::npos);
}

TEST_CASE("decode_output maps labels to slate positions") {
    auto slate = make_slate(3);
    auto r = decode_output(R"({"rank_order":["B","A","C"]})", slate, LabelScheme::uppercase_letters);
    REQUIRE(r.order == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("decode_output legality checks") {
    auto slate = make_slate(3);
    CHECK_THROWS_AS(decode_output(R"({"rank_order":["A","A","B"]})", slate, LabelScheme::uppercase_letters),
                    DuplicateLabel);
    CHECK_THROWS_AS(decode_output(R"({"rank_order":["A","B"]})", slate, LabelScheme::uppercase_letters),
                    WrongLength);
    CHECK_THROWS_AS(decode_output(R"({"rank_order":["A","B","Z"]})", slate, LabelScheme::uppercase_letters),
                    UnknownLabel);
    CHECK_THROWS_AS(decode_output("no json here", slate, LabelScheme::uppercase_letters), MalformedOutput);
    CHECK_THROWS_AS(decode_output(R"({"other":[1,2,3]})", slate, LabelScheme::uppercase_letters),
                    MalformedOutput);
}

TEST_CASE("decode_output tolerates surrounding prose") {
    auto slate = make_slate(3);
    auto r = decode_output("Sure! Here you go {\"rank_order\":[\"C\",\"B\",\"A\"]} hope that helps",
                           slate, LabelScheme::uppercase_letters);
    REQUIRE(r.order == std::vector<std::size_t>{2, 1, 0});
    // a decoy object without the key is skipped
    auto r2 = decode_output("{\"foo\":1} then {\"rank_order\":[\"A\",\"C\",\"B\"]}", slate,
                            LabelScheme::uppercase_letters);
    REQUIRE(r2.order == std::vector<std::size_t>{0, 2, 1});
}

TEST_CASE("decode_output accepts integer entries for numeral labels") {
    auto slate = make_slate(3);
    auto r = decode_output(R"({"rank_order":[2,1,3]})", slate, LabelScheme::arabic_numerals);
    REQUIRE(r.order == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("decode_output scheme none matches titles case-insensitively") {
    auto slate = make_slate(3);
    auto r = decode_output(R"({"rank_order":["title 2","TITLE 0","Title 1"]})", slate, LabelScheme::none);
    REQUIRE(r.order == std::vector<std::size_t>{2, 0, 1});
}

TEST_CASE("decode_output scheme none rejects ambiguous titles") {
    CandidateSlate slate;
    slate.items = {{"a", "Same  Title"}, {"b", "same title"}};
    CHECK_THROWS_AS(decode_output(R"({"rank_order":["Same Title","x"]})", slate, LabelScheme::none),
                    MalformedOutput);
}

TEST_CASE("decode round-trip over random permutations and schemes (property)") {
    const std::vector<LabelScheme> schemes = {
        LabelScheme::uppercase_letters, LabelScheme::arabic_numerals, LabelScheme::lowercase_letters,
        LabelScheme::greek_letters,     LabelScheme::roman_numerals,  LabelScheme::plain_list};
    Rng rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t j = 2 + rng.below(7);
        const auto scheme = schemes[rng.below(schemes.size())];
        auto slate = make_slate(j);
        auto labels = labels_for(scheme, j);
        std::vector<std::size_t> perm(j);
        for (std::size_t i = 0; i < j; ++i) perm[i] = i;
        rng.shuffle(perm);
        std::string answer = "noise {\"rank_order\":[";
        for (std::size_t i = 0; i < j; ++i) {
            if (i) answer += ',';
            answer += '"' + labels[perm[i]] + '"';
        }
        answer += "]} trailing";
        auto r = decode_output(answer, slate, scheme);
        REQUIRE(r.order == perm);
        REQUIRE(r.is_permutation_of(j));
    }
}
