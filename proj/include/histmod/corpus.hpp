#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "json.hpp"

#include "histmod/error.hpp"
#include "histmod/util.hpp"

namespace histmod {

enum class TokenizerMode { whitespace, punct_split };

inline TokenizerMode parse_tokenizer_mode(std::string_view s) {
    if (s == "whitespace") return TokenizerMode::whitespace;
    if (s == "punct-split") return TokenizerMode::punct_split;
    throw InputError("corpus", "unknown tokenizer mode '" + std::string(s) + "'");
}

namespace detail {
inline bool is_punctuation(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    }
    switch (cp) {
    case 0x00A1: // ¡
    case 0x00AB: // «
    case 0x00B7: // ·
    case 0x00BB: // »
    case 0x00BF: // ¿
    case 0x3001:
    case 0x3002:
        return true;
    default:
        return cp >= 0x2010 && cp <= 0x2027; // dashes, quotes, ellipsis
    }
}
} // namespace detail

/// whitespace: split on runs of whitespace.
/// punct_split: additionally emit every punctuation mark as its own token.
inline Tokens tokenize(std::string_view text, TokenizerMode mode = TokenizerMode::whitespace) {
    Tokens words = split_whitespace(text);
    if (mode == TokenizerMode::whitespace) return words;
    Tokens out;
    for (const auto& w : words) {
        std::string current;
        std::size_t pos = 0;
        while (pos < w.size()) {
            const std::size_t start = pos;
            const char32_t cp = utf8_next(w, pos);
            if (detail::is_punctuation(cp)) {
                if (!current.empty()) out.push_back(std::move(current)), current.clear();
                out.emplace_back(w.substr(start, pos - start));
            } else {
                current.append(w, start, pos - start);
            }
        }
        if (!current.empty()) out.push_back(std::move(current));
    }
    return out;
}

struct Sentence {
    std::string text;
    Tokens tokens;

    Sentence() = default;
    explicit Sentence(std::string line, TokenizerMode mode = TokenizerMode::whitespace)
        : text(std::move(line)), tokens(tokenize(text, mode)) {}
    static Sentence from_tokens(Tokens toks) {
        Sentence s;
        s.text = join(toks);
        s.tokens = std::move(toks);
        return s;
    }

    std::string tokenized() const { return join(tokens); }
    bool operator==(const Sentence&) const = default;
};

using Sentences = std::vector<Sentence>;

struct MonolingualCorpus {
    std::string name;
    Sentences sentences;

    std::size_t size() const { return sentences.size(); }
};

struct ParallelCorpus {
    std::string name;
    Sentences source; // original / historical side
    Sentences target; // modernized side

    std::size_t size() const { return source.size(); }

    void check_aligned() const {
        if (source.size() != target.size())
            throw AlignmentError("corpus", "parallel corpus '" + name + "' is misaligned: " +
                                               std::to_string(source.size()) +
                                               " != " + std::to_string(target.size()));
    }

    void add(Sentence s, Sentence t) {
        source.push_back(std::move(s));
        target.push_back(std::move(t));
    }

    ParallelCorpus swapped() const { return {name + ".swapped", target, source}; }
};

inline std::vector<Tokens> token_lists(const Sentences& side) {
    std::vector<Tokens> out;
    out.reserve(side.size());
    for (const auto& s : side) out.push_back(s.tokens);
    return out;
}

inline Sentences to_sentences(const std::vector<Tokens>& lists) {
    Sentences out;
    out.reserve(lists.size());
    for (const auto& t : lists) out.push_back(Sentence::from_tokens(t));
    return out;
}

// ---------------------------------------------------------------------------
// Loading

/// One Sentence per line. Empty lines are kept so parallel files stay
/// aligned.
inline Sentences load_sentences(const std::filesystem::path& path,
                                TokenizerMode mode = TokenizerMode::whitespace) {
    auto lines = read_lines(path);
    Sentences out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!utf8_valid(lines[i]))
            throw DecodeError("corpus", path.string() + ":" + std::to_string(i + 1) +
                                            ": invalid UTF-8");
        out.emplace_back(std::move(lines[i]), mode);
    }
    return out;
}

inline MonolingualCorpus load_monolingual(const std::filesystem::path& path,
                                          TokenizerMode mode = TokenizerMode::whitespace) {
    return {path.filename().string(), load_sentences(path, mode)};
}

inline ParallelCorpus load_parallel(const std::filesystem::path& source,
                                    const std::filesystem::path& target,
                                    TokenizerMode mode = TokenizerMode::whitespace) {
    ParallelCorpus c{source.stem().string(), load_sentences(source, mode),
                     load_sentences(target, mode)};
    if (c.source.size() != c.target.size())
        throw AlignmentError("corpus", "line-count mismatch between " + source.string() +
                                           " and " + target.string() + ": " +
                                           std::to_string(c.source.size()) +
                                           " != " + std::to_string(c.target.size()));
    return c;
}

inline std::variant<ParallelCorpus, MonolingualCorpus>
load_corpus(const std::filesystem::path& source,
            const std::optional<std::filesystem::path>& target,
            TokenizerMode mode = TokenizerMode::whitespace) {
    if (target) return load_parallel(source, *target, mode);
    return load_monolingual(source, mode);
}

// ---------------------------------------------------------------------------
// Statistics

struct CorpusStats {
    std::uint64_t sentences = 0;
    std::uint64_t tokens = 0;
    std::uint64_t vocab = 0;

    bool operator==(const CorpusStats&) const = default;
};

inline std::unordered_set<std::string> vocabulary(const Sentences& side) {
    std::unordered_set<std::string> v;
    for (const auto& s : side) v.insert(s.tokens.begin(), s.tokens.end());
    return v;
}

inline CorpusStats corpus_stats(const Sentences& side) {
    CorpusStats st;
    st.sentences = side.size();
    for (const auto& s : side) st.tokens += s.tokens.size();
    st.vocab = vocabulary(side).size();
    return st;
}

/// "35.2K" / "3.0M" style display with one decimal, rounded half-up.
/// Values under one thousand print as plain integers.
inline std::string format_km(std::uint64_t n) {
    auto scaled = [](std::uint64_t v, std::uint64_t unit, const char* suffix) {
        // tenths of the unit, half-up, in integer arithmetic
        const std::uint64_t tenths = (v * 20 + unit) / (2 * unit);
        return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + suffix;
    };
    if (n < 1000) return std::to_string(n);
    if (n < 1000000 && (n * 20 + 1000) / 2000 < 10000) return scaled(n, 1000, "K");
    return scaled(n, 1000000, "M");
}

inline nlohmann::json stats_to_json(const CorpusStats& st) {
    return {{"sentences", st.sentences},
            {"tokens", st.tokens},
            {"vocab", st.vocab},
            {"display",
             {{"sentences", format_km(st.sentences)},
              {"tokens", format_km(st.tokens)},
              {"vocab", format_km(st.vocab)}}}};
}

// ---------------------------------------------------------------------------
// Splitting

struct CorpusSplit {
    ParallelCorpus train;
    ParallelCorpus validation;
    ParallelCorpus test;
};

/// Seeded shuffle of pair indices, then consecutive slices. Pairs stay
/// aligned; the three parts are disjoint by construction.
inline CorpusSplit split_corpus(const ParallelCorpus& corpus, std::size_t train,
                                std::size_t validation, std::size_t test, std::uint64_t seed) {
    corpus.check_aligned();
    if (train + validation + test > corpus.size())
        throw SizeError("corpus", "requested split " + std::to_string(train) + "+" +
                                      std::to_string(validation) + "+" + std::to_string(test) +
                                      " exceeds corpus size " + std::to_string(corpus.size()));
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    // Fisher-Yates with explicit draws so the result does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    CorpusSplit out{{corpus.name + ".train", {}, {}},
                    {corpus.name + ".validation", {}, {}},
                    {corpus.name + ".test", {}, {}}};
    std::size_t k = 0;
    for (auto [part, n] : {std::pair{&out.train, train}, {&out.validation, validation},
                           {&out.test, test}}) {
        for (std::size_t i = 0; i < n; ++i, ++k)
            part->add(corpus.source[order[k]], corpus.target[order[k]]);
    }
    return out;
}

} // namespace histmod
