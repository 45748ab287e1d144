#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dbleu/error.hpp"

namespace dbleu {

struct TokenSequence {
    std::vector<std::string> tokens;

    std::size_t length() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }

    friend bool operator==(const TokenSequence &, const TokenSequence &) = default;
};

using NGram = std::vector<std::string>;

/// Multiset of the contiguous n-grams of one sequence, all of the same order.
struct NGramCounts {
    std::size_t order = 1;
    std::map<NGram, std::size_t> counts;

    std::size_t count(const NGram &g) const {
        auto it = counts.find(g);
        return it == counts.end() ? 0 : it->second;
    }

    std::size_t total() const {
        std::size_t sum = 0;
        for (const auto &[g, c] : counts)
            sum += c;
        return sum;
    }

    friend bool operator==(const NGramCounts &, const NGramCounts &) = default;
};

namespace detail {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline char ascii_lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

} // namespace detail

/// Splits on runs of ASCII whitespace. With `normalize`, ASCII letters are
/// lowercased first; other bytes (including multi-byte UTF-8) pass through.
inline TokenSequence tokenize(std::string_view text, bool normalize = false) {
    TokenSequence seq;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && detail::is_space(text[i]))
            ++i;
        std::size_t start = i;
        while (i < text.size() && !detail::is_space(text[i]))
            ++i;
        if (i > start) {
            std::string tok(text.substr(start, i - start));
            if (normalize)
                std::transform(tok.begin(), tok.end(), tok.begin(), detail::ascii_lower);
            seq.tokens.push_back(std::move(tok));
        }
    }
    return seq;
}

inline std::string join(const TokenSequence &seq) {
    std::string out;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        if (i)
            out += ' ';
        out += seq.tokens[i];
    }
    return out;
}

inline NGramCounts extract_ngrams(const TokenSequence &seq, std::size_t n) {
    if (n == 0)
        throw UsageError("n-gram order must be at least 1");
    NGramCounts out;
    out.order = n;
    if (seq.length() < n)
        return out;
    for (std::size_t i = 0; i + n <= seq.length(); ++i) {
        NGram g(seq.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                seq.tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
        ++out.counts[std::move(g)];
    }
    return out;
}

/// min(#g(u), #g(v)); zero when g is absent from either side.
inline std::size_t clipped_count(const NGram &g, const NGramCounts &u, const NGramCounts &v) {
    return std::min(u.count(g), v.count(g));
}

} // namespace dbleu
