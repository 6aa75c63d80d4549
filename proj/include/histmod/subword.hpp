#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "histmod/error.hpp"
#include "histmod/util.hpp"

namespace histmod {

inline constexpr std::size_t kDefaultMergeCount = 32000;
inline constexpr std::string_view kDefaultMarker = "@@";

struct BpeModel {
    std::vector<std::pair<std::string, std::string>> merges; // training order
    std::size_t merge_count = kDefaultMergeCount;
    std::string marker = std::string(kDefaultMarker);

    bool operator==(const BpeModel&) const = default;
};

namespace detail {

// Learner state over interned symbols. Words are distinct types weighted by
// their corpus frequency; pairs never straddle a word boundary.
class BpeLearner {
public:
    explicit BpeLearner(const std::map<std::string, std::uint64_t>& word_counts) {
        for (const auto& [word, freq] : word_counts) {
            std::vector<std::uint32_t> syms;
            for (auto& ch : utf8_chars(word)) syms.push_back(intern(ch));
            words_.push_back(std::move(syms));
            freqs_.push_back(static_cast<std::int64_t>(freq));
        }
        for (std::size_t w = 0; w < words_.size(); ++w) add_word_pairs(w, +1);
    }

    std::vector<std::pair<std::string, std::string>> run(std::size_t merge_count) {
        std::vector<std::pair<std::string, std::string>> merges;
        while (merges.size() < merge_count && !ranked_.empty()) {
            const auto [neg_count, left, right] = *ranked_.begin();
            if (-neg_count < 2) break;
            merges.emplace_back(symbols_[left], symbols_[right]);
            apply_merge(left, right, intern(symbols_[left] + symbols_[right]));
        }
        return merges;
    }

private:
    using PairKey = std::uint64_t;
    static PairKey key(std::uint32_t a, std::uint32_t b) {
        return (static_cast<PairKey>(a) << 32) | b;
    }

    struct RankOrder {
        const std::vector<std::string>* symbols;
        // count descending, then (left, right) lexicographically ascending
        bool operator()(const std::tuple<std::int64_t, std::uint32_t, std::uint32_t>& x,
                        const std::tuple<std::int64_t, std::uint32_t, std::uint32_t>& y) const {
            if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) < std::get<0>(y);
            const auto& s = *symbols;
            if (std::get<1>(x) != std::get<1>(y)) return s[std::get<1>(x)] < s[std::get<1>(y)];
            return s[std::get<2>(x)] < s[std::get<2>(y)];
        }
    };

    std::uint32_t intern(const std::string& sym) {
        auto [it, fresh] = ids_.try_emplace(sym, static_cast<std::uint32_t>(symbols_.size()));
        if (fresh) symbols_.push_back(sym);
        return it->second;
    }

    void bump(std::uint32_t a, std::uint32_t b, std::int64_t delta, std::size_t word) {
        const PairKey k = key(a, b);
        auto& c = counts_[k];
        if (c > 0) ranked_.erase({-c, a, b});
        c += delta;
        if (c > 0) ranked_.insert({-c, a, b});
        if (delta > 0)
            where_[k].insert(word);
        else if (c <= 0)
            counts_.erase(k), where_.erase(k);
    }

    void add_word_pairs(std::size_t w, int sign) {
        const auto& syms = words_[w];
        for (std::size_t i = 0; i + 1 < syms.size(); ++i)
            bump(syms[i], syms[i + 1], sign * freqs_[w], w);
    }

    void apply_merge(std::uint32_t left, std::uint32_t right, std::uint32_t merged) {
        const auto found = where_.find(key(left, right));
        if (found == where_.end()) return;
        const std::set<std::size_t> touched = found->second;
        for (const std::size_t w : touched) {
            auto& syms = words_[w];
            bool present = false;
            for (std::size_t i = 0; i + 1 < syms.size(); ++i)
                present |= syms[i] == left && syms[i + 1] == right;
            if (!present) continue;
            add_word_pairs(w, -1);
            std::vector<std::uint32_t> out;
            for (std::size_t i = 0; i < syms.size();) {
                if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
                    out.push_back(merged);
                    i += 2;
                } else {
                    out.push_back(syms[i++]);
                }
            }
            syms = std::move(out);
            add_word_pairs(w, +1);
        }
    }

    std::vector<std::string> symbols_;
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<std::vector<std::uint32_t>> words_;
    std::vector<std::int64_t> freqs_;
    std::unordered_map<PairKey, std::int64_t> counts_;
    std::unordered_map<PairKey, std::set<std::size_t>> where_;
    std::set<std::tuple<std::int64_t, std::uint32_t, std::uint32_t>, RankOrder> ranked_{
        RankOrder{&symbols_}};
};

} // namespace detail

/// Joint BPE: all streams are pooled before pair counting. Greedy: the most
/// frequent adjacent pair wins, ties go to the lexicographically smallest
/// (left, right); learning stops at merge_count or when no pair occurs twice.
inline BpeModel bpe_learn(std::span<const std::vector<Tokens>> streams, std::size_t merge_count,
                          std::string marker = std::string(kDefaultMarker)) {
    if (merge_count == 0) throw TrainingError("subword", "merge_count must be positive");
    std::map<std::string, std::uint64_t> word_counts;
    for (const auto& stream : streams)
        for (const auto& sentence : stream)
            for (const auto& w : sentence) ++word_counts[w];
    if (word_counts.empty()) throw TrainingError("subword", "cannot learn BPE from an empty corpus");
    BpeModel model;
    model.merge_count = merge_count;
    model.marker = std::move(marker);
    model.merges = detail::BpeLearner(word_counts).run(merge_count);
    return model;
}

inline BpeModel bpe_learn(const std::vector<Tokens>& stream, std::size_t merge_count) {
    return bpe_learn(std::span<const std::vector<Tokens>>(&stream, 1), merge_count);
}

/// Replays merges in training order on individual words. Holds the rank
/// index, so build once and reuse across sentences.
class BpeSegmenter {
public:
    explicit BpeSegmenter(const BpeModel& model) : model_(&model) {
        for (std::size_t r = 0; r < model.merges.size(); ++r)
            rank_.try_emplace(model.merges[r].first + ' ' + model.merges[r].second, r);
    }

    /// Subwords of one word, without markers.
    Tokens segment_word(const std::string& word) const {
        Tokens syms = utf8_chars(word);
        std::size_t done = 0; // merges with rank < done have been replayed
        while (syms.size() > 1) {
            std::size_t best = SIZE_MAX;
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                const auto it = rank_.find(syms[i] + ' ' + syms[i + 1]);
                if (it != rank_.end() && it->second >= done && it->second < best)
                    best = it->second;
            }
            if (best == SIZE_MAX) break;
            const auto& [left, right] = model_->merges[best];
            Tokens out;
            for (std::size_t i = 0; i < syms.size();) {
                if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
                    out.push_back(left + right);
                    i += 2;
                } else {
                    out.push_back(std::move(syms[i++]));
                }
            }
            syms = std::move(out);
            done = best + 1;
        }
        return syms;
    }

    Tokens apply(const Tokens& sentence) const {
        Tokens out;
        for (const auto& word : sentence) {
            Tokens parts = segment_word(word);
            for (std::size_t i = 0; i + 1 < parts.size(); ++i) parts[i] += model_->marker;
            for (auto& p : parts) out.push_back(std::move(p));
        }
        return out;
    }

private:
    const BpeModel* model_;
    std::unordered_map<std::string, std::size_t> rank_;
};

inline Tokens bpe_apply(const Tokens& sentence, const BpeModel& model) {
    return BpeSegmenter(model).apply(sentence);
}

/// Joins every marker-suffixed subword with its successor. A marker on the
/// final subword is stripped with a warning.
inline Tokens bpe_revert(const Tokens& subwords, std::string_view marker = kDefaultMarker) {
    Tokens out;
    std::string pending;
    bool open = false;
    auto ends_with_marker = [&](const std::string& s) {
        return !marker.empty() && s.size() >= marker.size() &&
               s.compare(s.size() - marker.size(), marker.size(), marker) == 0;
    };
    for (const auto& sw : subwords) {
        if (ends_with_marker(sw)) {
            pending.append(sw, 0, sw.size() - marker.size());
            open = true;
        } else {
            pending += sw;
            out.push_back(std::move(pending));
            pending.clear();
            open = false;
        }
    }
    if (open) {
        warn("malformed subword stream: trailing continuation marker stripped");
        if (!pending.empty()) out.push_back(std::move(pending));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model file: "#bpe v1 marker=@@" then one "left right" merge per line.

inline std::string bpe_serialize(const BpeModel& model) {
    std::string out = "#bpe v1 marker=" + model.marker + "\n";
    for (const auto& [l, r] : model.merges) out += l + ' ' + r + '\n';
    return out;
}

inline BpeModel bpe_parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("#bpe v1 marker=", 0) != 0)
        throw InputError("subword", "missing '#bpe v1 marker=' header");
    BpeModel model;
    model.marker = line.substr(std::string_view("#bpe v1 marker=").size());
    std::size_t lineno = 1;
    std::set<std::pair<std::string, std::string>> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto parts = split_whitespace(line);
        if (parts.size() != 2)
            throw InputError("subword", "malformed merge on line " + std::to_string(lineno));
        if (!seen.emplace(parts[0], parts[1]).second)
            throw InputError("subword", "duplicate merge on line " + std::to_string(lineno));
        model.merges.emplace_back(parts[0], parts[1]);
    }
    model.merge_count = std::max(kDefaultMergeCount, model.merges.size());
    return model;
}

inline void bpe_save(const BpeModel& model, const std::filesystem::path& path) {
    write_file(path, bpe_serialize(model));
}

inline BpeModel bpe_load(const std::filesystem::path& path) { return bpe_parse(read_file(path)); }

} // namespace histmod
