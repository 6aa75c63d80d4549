#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "histmod/corpus.hpp"
#include "histmod/parallel.hpp"
#include "histmod/smt/alignment.hpp"

namespace histmod::smt {

struct PhraseOption {
    Tokens target;
    double forward = 0;  // phi(target | source)
    double backward = 0; // phi(source | target)

    bool operator==(const PhraseOption&) const = default;
};

class PhraseTable {
public:
    PhraseTable() = default;
    explicit PhraseTable(std::size_t max_phrase_len) : max_phrase_len_(max_phrase_len) {}

    void add(const Tokens& source, PhraseOption option) {
        entries_[join(source)].push_back(std::move(option));
    }

    /// Options for a source phrase given as its space-joined form.
    const std::vector<PhraseOption>* find(const std::string& source) const {
        const auto it = entries_.find(source);
        return it == entries_.end() ? nullptr : &it->second;
    }

    std::size_t max_phrase_len() const { return max_phrase_len_; }
    void set_max_phrase_len(std::size_t n) { max_phrase_len_ = n; }
    std::size_t source_phrase_count() const { return entries_.size(); }
    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [s, opts] : entries_) n += opts.size();
        return n;
    }
    const std::unordered_map<std::string, std::vector<PhraseOption>>& entries() const {
        return entries_;
    }

    /// "src ||| tgt ||| fwd bwd" lines sorted by (src, tgt).
    std::string serialize() const {
        std::vector<std::string> keys;
        for (const auto& [s, opts] : entries_) keys.push_back(s);
        std::sort(keys.begin(), keys.end());
        std::string out;
        for (const auto& s : keys) {
            auto opts = entries_.at(s);
            std::sort(opts.begin(), opts.end(),
                      [](const auto& a, const auto& b) { return a.target < b.target; });
            for (const auto& o : opts)
                out += s + " ||| " + join(o.target) + " ||| " + format_double(o.forward) + ' ' +
                       format_double(o.backward) + '\n';
        }
        return out;
    }

    static PhraseTable parse(std::string_view text, std::size_t max_phrase_len = 7) {
        PhraseTable pt(max_phrase_len);
        std::size_t lineno = 0;
        std::size_t longest = 0;
        for (auto line : split_on(text, "\n")) {
            ++lineno;
            if (trim(line).empty()) continue;
            const auto fields = split_on(line, "|||");
            if (fields.size() != 3)
                throw InputError("smt", "phrase table line " + std::to_string(lineno) +
                                            ": expected 'src ||| tgt ||| fwd bwd'");
            const Tokens src = split_whitespace(fields[0]);
            const Tokens tgt = split_whitespace(fields[1]);
            const Tokens scores = split_whitespace(fields[2]);
            if (src.empty() || tgt.empty() || scores.size() != 2)
                throw InputError("smt", "phrase table line " + std::to_string(lineno) +
                                            ": empty phrase or wrong score count");
            longest = std::max({longest, src.size(), tgt.size()});
            pt.add(src, {tgt, parse_double(scores[0], "phi forward"),
                         parse_double(scores[1], "phi backward")});
        }
        pt.max_phrase_len_ = std::max(max_phrase_len, longest);
        return pt;
    }

private:
    std::size_t max_phrase_len_ = 7;
    std::unordered_map<std::string, std::vector<PhraseOption>> entries_;
};

/// All phrase pairs consistent with `alignment`, both sides at most
/// `max_len` words; unaligned target words at the edges are absorbed.
inline std::vector<std::pair<Tokens, Tokens>> consistent_phrases(const Tokens& source,
                                                                 const Tokens& target,
                                                                 const Alignment& alignment,
                                                                 std::size_t max_len) {
    std::vector<std::pair<Tokens, Tokens>> out;
    const int ls = static_cast<int>(source.size()), lt = static_cast<int>(target.size());
    const int max = static_cast<int>(max_len);
    std::vector<std::vector<int>> by_target(static_cast<std::size_t>(lt));
    std::vector<bool> tgt_aligned(static_cast<std::size_t>(lt));
    for (auto [i, j] : alignment) {
        by_target[static_cast<std::size_t>(j)].push_back(i);
        tgt_aligned[static_cast<std::size_t>(j)] = true;
    }
    for (int s1 = 0; s1 < ls; ++s1) {
        for (int s2 = s1; s2 < ls && s2 - s1 < max; ++s2) {
            int t1 = lt, t2 = -1;
            for (auto [i, j] : alignment)
                if (i >= s1 && i <= s2) t1 = std::min(t1, j), t2 = std::max(t2, j);
            if (t2 < 0 || t2 - t1 >= max) continue;
            bool consistent = true;
            for (int j = t1; j <= t2 && consistent; ++j)
                for (int i : by_target[static_cast<std::size_t>(j)])
                    if (i < s1 || i > s2) consistent = false;
            if (!consistent) continue;
            const Tokens src(source.begin() + s1, source.begin() + s2 + 1);
            for (int e1 = t1; e1 >= 0 && (e1 == t1 || !tgt_aligned[static_cast<std::size_t>(e1)]); --e1) {
                for (int e2 = t2; e2 < lt && (e2 == t2 || !tgt_aligned[static_cast<std::size_t>(e2)]); ++e2) {
                    if (e2 - e1 >= max) break;
                    out.emplace_back(src, Tokens(target.begin() + e1, target.begin() + e2 + 1));
                }
            }
        }
    }
    return out;
}

/// Symmetrised Viterbi alignments in both directions, consistent phrase
/// enumeration, relative-frequency phi in both directions.
/// `forward` is t(target | source), `backward` is t(source | target).
inline PhraseTable extract_phrases(const ParallelCorpus& corpus, const LexicalTable& forward,
                                   const LexicalTable& backward, std::size_t max_len = 7) {
    corpus.check_aligned();
    std::vector<std::vector<std::pair<Tokens, Tokens>>> per_pair(corpus.size());
    parallel_for(corpus.size(), [&](std::size_t p) {
        const auto& s = corpus.source[p].tokens;
        const auto& t = corpus.target[p].tokens;
        if (s.empty() || t.empty()) return;
        const Alignment fwd = viterbi_align(forward, s, t);
        Alignment bwd;
        for (auto [j, i] : viterbi_align(backward, t, s)) bwd.emplace(i, j);
        const Alignment a = symmetrize(fwd, bwd, static_cast<int>(s.size()), static_cast<int>(t.size()));
        per_pair[p] = consistent_phrases(s, t, a, max_len);
    });

    std::map<std::pair<std::string, std::string>, double> joint;
    std::unordered_map<std::string, double> src_count, tgt_count;
    for (const auto& pairs : per_pair) {
        for (const auto& [s, t] : pairs) {
            auto ks = join(s), kt = join(t);
            src_count[ks] += 1;
            tgt_count[kt] += 1;
            joint[{std::move(ks), std::move(kt)}] += 1;
        }
    }
    PhraseTable table(max_len);
    for (const auto& [k, c] : joint)
        table.add(split_whitespace(k.first),
                  {split_whitespace(k.second), c / src_count[k.first], c / tgt_count[k.second]});
    return table;
}

} // namespace histmod::smt
