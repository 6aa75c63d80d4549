#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "histmod/corpus.hpp"
#include "histmod/error.hpp"
#include "histmod/parallel.hpp"
#include "histmod/smt/vocab.hpp"

namespace histmod::smt {

inline constexpr std::string_view kNullToken = "<null>";

/// t(target | source) from IBM Model 1. Source id 0 is the NULL token.
class LexicalTable {
public:
    LexicalTable() { source_.intern(std::string(kNullToken)); }

    double prob(const std::string& source, const std::string& target) const {
        const auto s = source_.find(source, kMissing);
        const auto t = target_.find(target, kMissing);
        if (s == kMissing || t == kMissing) return 0.0;
        return prob(s, t);
    }

    double prob(WordId source, WordId target) const {
        const auto it = table_.find(key(source, target));
        return it == table_.end() ? 0.0 : it->second;
    }

    /// Sum over targets of t(target | source); 1 for any trained row.
    double row_sum(const std::string& source) const {
        const auto s = source_.find(source, kMissing);
        if (s == kMissing) return 0.0;
        double sum = 0;
        for (const auto& [k, v] : table_)
            if ((k >> 32) == s) sum += v;
        return sum;
    }

    const Vocab& source_vocab() const { return source_; }
    const Vocab& target_vocab() const { return target_; }
    Vocab& source_vocab() { return source_; }
    Vocab& target_vocab() { return target_; }
    const std::unordered_map<std::uint64_t, double>& entries() const { return table_; }
    std::unordered_map<std::uint64_t, double>& entries() { return table_; }

    static std::uint64_t key(WordId s, WordId t) { return (std::uint64_t{s} << 32) | t; }
    static constexpr WordId kNull = 0;
    static constexpr WordId kMissing = UINT32_MAX;

    /// "source target prob" lines, sorted for byte-stable output.
    std::string serialize() const {
        std::vector<std::tuple<std::string, std::string, double>> rows;
        for (const auto& [k, v] : table_)
            rows.emplace_back(source_.word(static_cast<WordId>(k >> 32)),
                              target_.word(static_cast<WordId>(k & 0xFFFFFFFFu)), v);
        std::sort(rows.begin(), rows.end());
        std::string out;
        for (const auto& [s, t, p] : rows) out += s + ' ' + t + ' ' + format_double(p) + '\n';
        return out;
    }

    static LexicalTable parse(std::string_view text) {
        LexicalTable lt;
        for (auto line : split_on(text, "\n")) {
            const auto parts = split_whitespace(line);
            if (parts.empty()) continue;
            if (parts.size() != 3) throw InputError("smt", "malformed lexical table line");
            const auto s = lt.source_.intern(parts[0]);
            const auto t = lt.target_.intern(parts[1]);
            lt.table_[key(s, t)] = parse_double(parts[2], "lexical probability");
        }
        return lt;
    }

private:
    Vocab source_;
    Vocab target_;
    std::unordered_map<std::uint64_t, double> table_;
};

struct Ibm1Options {
    int iterations = 10;
    double epsilon = 1e-6;
};

namespace detail {
inline constexpr std::size_t kEmChunk = 256;

struct IdCorpus {
    std::vector<std::vector<WordId>> source; // without NULL
    std::vector<std::vector<WordId>> target;
};
} // namespace detail

/// IBM Model 1 EM with a NULL source word. t starts uniform over the target
/// vocabulary. Stops after `iterations` or once the largest parameter change
/// drops below `epsilon`. If `log_likelihoods` is given it receives the
/// corpus log-likelihood before training and after every iteration.
inline LexicalTable train_ibm1(const ParallelCorpus& corpus, Ibm1Options options = {},
                               std::vector<double>* log_likelihoods = nullptr) {
    corpus.check_aligned();
    if (corpus.size() == 0) throw TrainingError("smt", "cannot train IBM-1 on an empty corpus");
    if (options.iterations < 1) throw TrainingError("smt", "IBM-1 needs at least one iteration");

    LexicalTable table;
    detail::IdCorpus ids;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        std::vector<WordId> s, t;
        for (const auto& w : corpus.source[i].tokens) s.push_back(table.source_vocab().intern(w));
        for (const auto& w : corpus.target[i].tokens) t.push_back(table.target_vocab().intern(w));
        ids.source.push_back(std::move(s));
        ids.target.push_back(std::move(t));
    }
    if (table.target_vocab().size() == 0)
        throw TrainingError("smt", "cannot train IBM-1: target side has no tokens");

    const double uniform = 1.0 / static_cast<double>(table.target_vocab().size());
    bool initial = true;
    auto& t = table.entries();
    auto lookup = [&](WordId s, WordId f) {
        if (initial) return uniform;
        const auto it = t.find(LexicalTable::key(s, f));
        return it == t.end() ? 0.0 : it->second;
    };

    auto log_likelihood = [&] {
        double ll = 0;
        for (std::size_t p = 0; p < ids.source.size(); ++p) {
            const auto& src = ids.source[p];
            const double norm = static_cast<double>(src.size() + 1);
            for (const WordId f : ids.target[p]) {
                double z = lookup(LexicalTable::kNull, f);
                for (const WordId e : src) z += lookup(e, f);
                ll += std::log(z / norm);
            }
        }
        return ll;
    };
    if (log_likelihoods) log_likelihoods->push_back(log_likelihood());

    const std::size_t n_pairs = ids.source.size();
    const std::size_t n_chunks = (n_pairs + detail::kEmChunk - 1) / detail::kEmChunk;
    for (int it = 0; it < options.iterations; ++it) {
        // Fixed-size chunks reduced in chunk order: same sums for any thread count.
        std::vector<std::unordered_map<std::uint64_t, double>> partial(n_chunks);
        parallel_for(n_chunks, [&](std::size_t c) {
            auto& counts = partial[c];
            const std::size_t end = std::min(n_pairs, (c + 1) * detail::kEmChunk);
            std::vector<double> probs;
            for (std::size_t p = c * detail::kEmChunk; p < end; ++p) {
                const auto& src = ids.source[p];
                for (const WordId f : ids.target[p]) {
                    probs.assign(1, lookup(LexicalTable::kNull, f));
                    for (const WordId e : src) probs.push_back(lookup(e, f));
                    double z = 0;
                    for (double v : probs) z += v;
                    if (z <= 0) continue;
                    counts[LexicalTable::key(LexicalTable::kNull, f)] += probs[0] / z;
                    for (std::size_t i = 0; i < src.size(); ++i)
                        counts[LexicalTable::key(src[i], f)] += probs[i + 1] / z;
                }
            }
        });
        std::unordered_map<std::uint64_t, double> counts;
        for (const auto& part : partial)
            for (const auto& [k, v] : part) counts[k] += v;
        std::unordered_map<WordId, double> totals;
        // sum in a fixed key order so row normalisers are reproducible
        std::vector<std::uint64_t> keys;
        keys.reserve(counts.size());
        for (const auto& [k, v] : counts) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        for (const auto k : keys) totals[static_cast<WordId>(k >> 32)] += counts[k];

        double max_change = 0;
        std::unordered_map<std::uint64_t, double> next;
        next.reserve(keys.size());
        for (const auto k : keys) {
            const double v = counts[k] / totals[static_cast<WordId>(k >> 32)];
            max_change = std::max(max_change, std::abs(v - lookup(static_cast<WordId>(k >> 32),
                                                                   static_cast<WordId>(k))));
            next.emplace(k, v);
        }
        t = std::move(next);
        initial = false;
        if (log_likelihoods) log_likelihoods->push_back(log_likelihood());
        if (max_change < options.epsilon) break;
    }
    return table;
}

// ---------------------------------------------------------------------------
// Word alignment

/// Alignment links as (source position, target position).
using Alignment = std::set<std::pair<int, int>>;

namespace detail {
// argmax over candidate positions; NULL only wins when strictly better than
// every real word; real-word ties go to the position nearest the diagonal,
// then the lower index.
inline int best_link(double null_prob, const std::vector<double>& probs, double diagonal) {
    int best = -1;
    double best_p = -1;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
        const double p = probs[static_cast<std::size_t>(i)];
        if (p > best_p ||
            (p == best_p && std::abs(i - diagonal) < std::abs(best - diagonal))) {
            best = i;
            best_p = p;
        }
    }
    if (best < 0 || best_p <= 0 || null_prob > best_p) return -1;
    return best;
}
} // namespace detail

/// Viterbi alignment of IBM-1 trained as t(target | source).
inline Alignment viterbi_align(const LexicalTable& t, const Tokens& source, const Tokens& target) {
    Alignment a;
    const double ratio = target.empty() ? 0.0
                                        : static_cast<double>(source.size()) /
                                              static_cast<double>(target.size());
    std::vector<double> probs(source.size());
    for (int j = 0; j < static_cast<int>(target.size()); ++j) {
        const auto& f = target[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < source.size(); ++i) probs[i] = t.prob(source[i], f);
        const int i = detail::best_link(t.prob(std::string(kNullToken), f), probs,
                                        (j + 0.5) * ratio - 0.5);
        if (i >= 0) a.emplace(i, j);
    }
    return a;
}

/// Intersection grown toward the union along diagonal neighbours, then any
/// union link touching an unaligned word (grow-diag-final).
inline Alignment symmetrize(const Alignment& forward, const Alignment& backward, int source_len,
                            int target_len) {
    Alignment uni = forward;
    uni.insert(backward.begin(), backward.end());
    Alignment a;
    std::set_intersection(forward.begin(), forward.end(), backward.begin(), backward.end(),
                          std::inserter(a, a.end()));
    std::vector<bool> src_aligned(static_cast<std::size_t>(source_len)),
        tgt_aligned(static_cast<std::size_t>(target_len));
    for (auto [i, j] : a) src_aligned[static_cast<std::size_t>(i)] = tgt_aligned[static_cast<std::size_t>(j)] = true;
    auto add = [&](int i, int j) {
        a.emplace(i, j);
        src_aligned[static_cast<std::size_t>(i)] = tgt_aligned[static_cast<std::size_t>(j)] = true;
    };
    static constexpr int kNeighbours[8][2] = {{-1, 0}, {0, -1}, {1, 0}, {0, 1},
                                              {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
    for (bool grew = true; grew;) {
        grew = false;
        const Alignment snapshot = a;
        for (auto [i, j] : snapshot) {
            for (const auto& d : kNeighbours) {
                const int ni = i + d[0], nj = j + d[1];
                if (ni < 0 || nj < 0 || ni >= source_len || nj >= target_len) continue;
                if (a.contains({ni, nj}) || !uni.contains({ni, nj})) continue;
                if (!src_aligned[static_cast<std::size_t>(ni)] || !tgt_aligned[static_cast<std::size_t>(nj)]) {
                    add(ni, nj);
                    grew = true;
                }
            }
        }
    }
    for (auto [i, j] : uni)
        if (!src_aligned[static_cast<std::size_t>(i)] || !tgt_aligned[static_cast<std::size_t>(j)]) add(i, j);
    return a;
}

} // namespace histmod::smt
