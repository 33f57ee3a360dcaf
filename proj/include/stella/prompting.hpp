#pragma once

#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stella/domain.hpp"
#include "stella/errors.hpp"

namespace stella {

enum class LabelScheme {
    uppercase_letters,  // default
    arabic_numerals,
    lowercase_letters,
    greek_letters,
    roman_numerals,
    plain_list,
    none,
};

inline std::string to_string(LabelScheme s) {
    switch (s) {
        case LabelScheme::uppercase_letters: return "uppercase_letters";
        case LabelScheme::arabic_numerals: return "arabic_numerals";
        case LabelScheme::lowercase_letters: return "lowercase_letters";
        case LabelScheme::greek_letters: return "greek_letters";
        case LabelScheme::roman_numerals: return "roman_numerals";
        case LabelScheme::plain_list: return "plain_list";
        case LabelScheme::none: return "none";
    }
    return "?";
}

inline LabelScheme label_scheme_from_string(std::string_view s) {
    if (s == "uppercase_letters") return LabelScheme::uppercase_letters;
    if (s == "arabic_numerals") return LabelScheme::arabic_numerals;
    if (s == "lowercase_letters") return LabelScheme::lowercase_letters;
    if (s == "greek_letters") return LabelScheme::greek_letters;
    if (s == "roman_numerals") return LabelScheme::roman_numerals;
    if (s == "plain_list") return LabelScheme::plain_list;
    if (s == "none") return LabelScheme::none;
    throw ConfigError("unknown label scheme: " + std::string(s));
}

namespace detail {

inline std::string roman_numeral(std::size_t n) {
    static const std::array<std::pair<std::size_t, const char*>, 13> table{{
        {1000, "M"}, {900, "CM"}, {500, "D"}, {400, "CD"}, {100, "C"}, {90, "XC"},
        {50, "L"}, {40, "XL"}, {10, "X"}, {9, "IX"}, {5, "V"}, {4, "IV"}, {1, "I"},
    }};
    std::string out;
    for (const auto& [v, s] : table) {
        while (n >= v) {
            out += s;
            n -= v;
        }
    }
    return out;
}

// Lowercase Greek alphabet in canonical order, final sigma excluded.
inline const std::vector<std::string>& greek_alphabet() {
    static const std::vector<std::string> a = {
        "α", "β", "γ", "δ", "ε", "ζ", "η", "θ",
        "ι", "κ", "λ", "μ", "ν", "ξ", "ο", "π",
        "ρ", "σ", "τ", "υ", "φ", "χ", "ψ", "ω"};
    return a;
}

}  // namespace detail

inline std::vector<std::string> labels_for(LabelScheme scheme, std::size_t j) {
    std::vector<std::string> out;
    out.reserve(j);
    switch (scheme) {
        case LabelScheme::uppercase_letters:
        case LabelScheme::lowercase_letters: {
            if (j > 26) throw SchemeOverflow("letter schemes support at most 26 labels");
            char base = scheme == LabelScheme::uppercase_letters ? 'A' : 'a';
            for (std::size_t i = 0; i < j; ++i) out.push_back(std::string(1, static_cast<char>(base + i)));
            break;
        }
        case LabelScheme::greek_letters: {
            const auto& alpha = detail::greek_alphabet();
            if (j > alpha.size()) throw SchemeOverflow("greek scheme supports at most 24 labels");
            for (std::size_t i = 0; i < j; ++i) out.push_back(alpha[i]);
            break;
        }
        case LabelScheme::roman_numerals: {
            if (j > 3999) throw SchemeOverflow("roman scheme supports at most 3999 labels");
            for (std::size_t i = 0; i < j; ++i) out.push_back(detail::roman_numeral(i + 1));
            break;
        }
        case LabelScheme::arabic_numerals:
            for (std::size_t i = 0; i < j; ++i) out.push_back(std::to_string(i + 1));
            break;
        case LabelScheme::plain_list:
            for (std::size_t i = 0; i < j; ++i) out.push_back("Candidate " + std::to_string(i + 1));
            break;
        case LabelScheme::none:
            out.assign(j, "");
            break;
    }
    return out;
}

struct PromptStyle {
    // Opening task description; the renderer appends the output-format
    // sentence with scheme-specific labels.
    std::string task_description =
        "You are a book recommendation system now. Please list the ranked recommendations.";
    std::string item_noun = "book";
    std::string history_noun = "reading";
    LabelScheme scheme = LabelScheme::uppercase_letters;
    std::size_t max_history = 0;  // 0 = unlimited; otherwise keep the most recent
};

struct PromptContext {
    PromptStyle style;
    std::vector<std::string> history_titles;  // non-empty
    CandidateSlate slate;
};

inline std::string render_prompt(const PromptContext& ctx) {
    ctx.slate.validate();
    if (ctx.history_titles.empty()) throw Error("render_prompt: empty history");
    const std::size_t j = ctx.slate.size();
    const auto labels = labels_for(ctx.style.scheme, j);

    std::string out = ctx.style.task_description;
    out += " The output should be in the format of json, e.g.  {\"rank_order\":[";
    for (std::size_t i = 0; i < j; ++i) {
        if (i) out += ", ";
        out += '"';
        out += ctx.style.scheme == LabelScheme::none ? ctx.slate.items[i].title : labels[i];
        out += '"';
    }
    out += "]}.\n\nInput: Here is the ";
    out += ctx.style.history_noun;
    out += " history of a user: ";
    std::size_t first = 0;
    if (ctx.style.max_history > 0 && ctx.history_titles.size() > ctx.style.max_history) {
        first = ctx.history_titles.size() - ctx.style.max_history;
    }
    for (std::size_t i = first; i < ctx.history_titles.size(); ++i) {
        if (i != first) out += ", ";
        out += ctx.history_titles[i];
    }
    out += ".\nThe ";
    out += ctx.style.item_noun;
    out += "s on the candidate list are:\n";
    for (std::size_t i = 0; i < j; ++i) {
        out += '\n';
        if (ctx.style.scheme != LabelScheme::none) {
            out += '(';
            out += labels[i];
            out += ") ";
        }
        out += ctx.slate.items[i].title;
        out += i + 1 == j ? ".\n" : ",\n";
    }
    out += "\nOutput:";
    return out;
}

namespace detail {

inline std::string normalize_title(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!out.empty()) pending_space = true;
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// First balanced {...} starting at `start`; npos when unbalanced.
inline std::size_t balanced_object_end(std::string_view raw, std::size_t start) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
        char c = raw[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i;
        }
    }
    return std::string_view::npos;
}

}  // namespace detail

// Tolerant extraction: the first balanced JSON object carrying `rank_order`
// anywhere in the raw text; everything around it is ignored.
inline Ranking decode_output(const std::string& raw, const CandidateSlate& slate, LabelScheme scheme) {
    slate.validate();
    const std::size_t j = slate.size();

    nlohmann::json obj;
    bool found = false;
    for (std::size_t i = raw.find('{'); i != std::string::npos; i = raw.find('{', i + 1)) {
        std::size_t end = detail::balanced_object_end(raw, i);
        if (end == std::string::npos) continue;
        auto parsed = nlohmann::json::parse(raw.substr(i, end - i + 1), nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("rank_order")) continue;
        obj = std::move(parsed);
        found = true;
        break;
    }
    if (!found) throw MalformedOutput("no JSON object with rank_order found", raw);
    const auto& arr = obj["rank_order"];
    if (!arr.is_array()) throw MalformedOutput("rank_order is not an array", raw);
    if (arr.size() != j) {
        throw WrongLength("rank_order has " + std::to_string(arr.size()) + " entries, expected " +
                              std::to_string(j),
                          raw);
    }

    std::map<std::string, std::size_t> to_position;
    if (scheme == LabelScheme::none) {
        for (std::size_t i = 0; i < j; ++i) {
            auto key = detail::normalize_title(slate.items[i].title);
            if (!to_position.emplace(key, i).second) {
                throw MalformedOutput("ambiguous titles under normalization: " + slate.items[i].title, raw);
            }
        }
    } else {
        const auto labels = labels_for(scheme, j);
        for (std::size_t i = 0; i < j; ++i) to_position.emplace(labels[i], i);
    }

    Ranking out;
    std::vector<bool> used(j, false);
    for (const auto& entry : arr) {
        std::string text;
        if (entry.is_string()) {
            text = entry.get<std::string>();
        } else if (entry.is_number_integer()) {
            text = std::to_string(entry.get<long long>());
        } else {
            throw MalformedOutput("rank_order entry is neither string nor integer", raw);
        }
        text = scheme == LabelScheme::none ? detail::normalize_title(text) : detail::trim(text);
        auto it = to_position.find(text);
        if (it == to_position.end()) throw UnknownLabel("unknown label: " + text, raw);
        if (used[it->second]) throw DuplicateLabel("duplicate label: " + text, raw);
        used[it->second] = true;
        out.order.push_back(it->second);
    }
    return out;
}

}  // namespace stella
