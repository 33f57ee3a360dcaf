#pragma once

#include <string>
#include <vector>

#include "stella/domain.hpp"
#include "stella/prompting.hpp"

namespace stella::test {

inline CandidateSlate make_slate(std::size_t j, std::size_t truth = 0) {
    CandidateSlate s;
    for (std::size_t i = 0; i < j; ++i) {
        s.items.push_back({"item" + std::to_string(i), "Title " + std::to_string(i)});
    }
    s.truth_index = truth;
    return s;
}

inline PromptContext make_ctx(const CandidateSlate& slate,
                              LabelScheme scheme = LabelScheme::uppercase_letters) {
    PromptContext ctx;
    ctx.style.scheme = scheme;
    ctx.history_titles = {"History One", "History Two"};
    ctx.slate = slate;
    return ctx;
}

inline std::string arrangement_key(const CandidateSlate& s) {
    std::string key;
    for (const auto& item : s.items) {
        key += item.id;
        key += '|';
    }
    return key;
}

}  // namespace stella::test
