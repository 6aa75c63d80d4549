#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "histmod/error.hpp"
#include "histmod/parallel.hpp"
#include "histmod/util.hpp"

namespace histmod {

struct EvalPair {
    std::vector<Tokens> hypotheses;
    std::vector<Tokens> references;

    void validate() const {
        if (hypotheses.size() != references.size())
            throw InputError("evaluation", "hypothesis/reference segment counts differ: " +
                                               std::to_string(hypotheses.size()) +
                                               " != " + std::to_string(references.size()));
        if (hypotheses.empty()) throw InputError("evaluation", "no segments to evaluate");
    }
    std::size_t size() const { return hypotheses.size(); }
};

// ---------------------------------------------------------------------------
// BLEU

inline constexpr int kBleuOrder = 4;

struct BleuStats {
    std::array<std::int64_t, kBleuOrder> matches{};
    std::array<std::int64_t, kBleuOrder> totals{};
    std::int64_t hyp_len = 0;
    std::int64_t ref_len = 0;

    BleuStats& operator+=(const BleuStats& o) {
        for (int n = 0; n < kBleuOrder; ++n) matches[n] += o.matches[n], totals[n] += o.totals[n];
        hyp_len += o.hyp_len;
        ref_len += o.ref_len;
        return *this;
    }
    BleuStats& operator-=(const BleuStats& o) {
        for (int n = 0; n < kBleuOrder; ++n) matches[n] -= o.matches[n], totals[n] -= o.totals[n];
        hyp_len -= o.hyp_len;
        ref_len -= o.ref_len;
        return *this;
    }
    bool operator==(const BleuStats&) const = default;
};

/// Clipped n-gram matches of one segment.
inline BleuStats bleu_stats(const Tokens& hyp, const Tokens& ref) {
    BleuStats st;
    st.hyp_len = static_cast<std::int64_t>(hyp.size());
    st.ref_len = static_cast<std::int64_t>(ref.size());
    for (int n = 1; n <= kBleuOrder; ++n) {
        const auto un = static_cast<std::size_t>(n);
        std::unordered_map<std::string, std::int64_t> ref_counts;
        for (std::size_t i = 0; i + un <= ref.size(); ++i)
            ++ref_counts[join(std::span<const std::string>(ref.data() + i, un), "\x1f")];
        std::unordered_map<std::string, std::int64_t> hyp_counts;
        for (std::size_t i = 0; i + un <= hyp.size(); ++i)
            ++hyp_counts[join(std::span<const std::string>(hyp.data() + i, un), "\x1f")];
        for (const auto& [g, c] : hyp_counts) {
            const auto it = ref_counts.find(g);
            if (it != ref_counts.end()) st.matches[static_cast<std::size_t>(n - 1)] += std::min(c, it->second);
            st.totals[static_cast<std::size_t>(n - 1)] += c;
        }
    }
    return st;
}

/// Corpus BLEU in percent, unsmoothed: any zero precision gives 0. Orders
/// for which the hypotheses contain no n-gram at all are left out of the
/// geometric mean.
inline double bleu_from_stats(const BleuStats& st) {
    if (st.hyp_len == 0) return 0.0;
    double log_sum = 0;
    int orders = 0;
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
        if (st.totals[n] == 0) continue;
        if (st.matches[n] == 0) return 0.0;
        log_sum += std::log(double(st.matches[n]) / double(st.totals[n]));
        ++orders;
    }
    const double bp = st.hyp_len < st.ref_len ? std::exp(1.0 - double(st.ref_len) / double(st.hyp_len)) : 1.0;
    return 100.0 * bp * std::exp(log_sum / orders);
}

/// Segment-level BLEU with add-one smoothing on n > 1 precisions.
inline double sentence_bleu(const BleuStats& st) {
    if (st.hyp_len == 0) return 0.0;
    double log_sum = 0;
    int orders = 0;
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
        if (st.totals[n] == 0) continue;
        const double add = n == 0 ? 0.0 : 1.0;
        const double m = double(st.matches[n]) + add, t = double(st.totals[n]) + add;
        if (m == 0) return 0.0;
        log_sum += std::log(m / t);
        ++orders;
    }
    const double bp = st.hyp_len < st.ref_len ? std::exp(1.0 - double(st.ref_len) / double(st.hyp_len)) : 1.0;
    return 100.0 * bp * std::exp(log_sum / orders);
}

inline double bleu(const EvalPair& pair) {
    pair.validate();
    BleuStats total;
    for (std::size_t i = 0; i < pair.size(); ++i) total += bleu_stats(pair.hypotheses[i], pair.references[i]);
    return bleu_from_stats(total);
}

// ---------------------------------------------------------------------------
// TER

enum class TerNormalization { reference, hypothesis };

struct TerSegment {
    int edits = 0;  // insertions + deletions + substitutions + shifts
    int shifts = 0;
};

namespace detail {

class EditDistance {
public:
    /// Word-level Levenshtein distance.
    int operator()(const std::vector<int>& a, const std::vector<int>& b) {
        row_.resize(b.size() + 1);
        for (std::size_t j = 0; j <= b.size(); ++j) row_[j] = static_cast<int>(j);
        for (std::size_t i = 1; i <= a.size(); ++i) {
            int diag = row_[0];
            row_[0] = static_cast<int>(i);
            for (std::size_t j = 1; j <= b.size(); ++j) {
                const int up = row_[j];
                row_[j] = std::min({up + 1, row_[j - 1] + 1, diag + (a[i - 1] != b[j - 1])});
                diag = up;
            }
        }
        return row_[b.size()];
    }

    /// Positions of `a` matched (equal, aligned) on one minimum-cost path.
    std::vector<bool> matched(const std::vector<int>& a, const std::vector<int>& b) {
        const std::size_t n = a.size(), m = b.size();
        std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
        for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
        for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t j = 1; j <= m; ++j)
                d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
        std::vector<bool> out(n);
        for (std::size_t i = n, j = m; i > 0 && j > 0;) {
            if (a[i - 1] == b[j - 1] && d[i][j] == d[i - 1][j - 1]) {
                out[i - 1] = true;
                --i, --j;
            } else if (d[i][j] == d[i - 1][j - 1] + 1) {
                --i, --j;
            } else if (d[i][j] == d[i - 1][j] + 1) {
                --i;
            } else {
                --j;
            }
        }
        return out;
    }

private:
    std::vector<int> row_;
};

inline bool contains_block(const std::vector<int>& ref, const std::vector<int>& seq, std::size_t start,
                           std::size_t len) {
    if (len > ref.size()) return false;
    for (std::size_t r = 0; r + len <= ref.size(); ++r)
        if (std::equal(seq.begin() + static_cast<long>(start), seq.begin() + static_cast<long>(start + len),
                       ref.begin() + static_cast<long>(r)))
            return true;
    return false;
}

} // namespace detail

inline constexpr std::size_t kTerMaxShiftLength = 10;

/// Minimum edits with greedy block shifts: each round applies the shift
/// with the largest net reduction (edit-distance drop minus the shift's own
/// cost of 1), ties to the shorter block, then the leftmost block and
/// destination. Candidate blocks must occur in the reference and contain a
/// word that is not already matched. At most 10 * |hyp| rounds.
inline TerSegment ter_segment(const Tokens& hyp, const Tokens& ref) {
    std::unordered_map<std::string, int> ids;
    auto encode = [&](const Tokens& t) {
        std::vector<int> out;
        for (const auto& w : t) out.push_back(ids.try_emplace(w, static_cast<int>(ids.size())).first->second);
        return out;
    };
    std::vector<int> cur = encode(hyp);
    const std::vector<int> r = encode(ref);
    detail::EditDistance lev;
    int dist = lev(cur, r);
    TerSegment seg;
    const std::size_t n = cur.size();
    std::vector<int> moved(n);
    for (std::size_t round = 0; round < 10 * n && dist > 0; ++round) {
        const auto matched = lev.matched(cur, r);
        int best_gain = 0;
        std::size_t best_start = 0, best_len = 0, best_dest = 0;
        for (std::size_t len = 1; len <= std::min(n, kTerMaxShiftLength); ++len) {
            for (std::size_t start = 0; start + len <= n; ++start) {
                if (std::all_of(matched.begin() + static_cast<long>(start),
                                matched.begin() + static_cast<long>(start + len), [](bool b) { return b; }))
                    continue;
                if (!detail::contains_block(r, cur, start, len)) continue;
                for (std::size_t dest = 0; dest + len <= n; ++dest) {
                    if (dest == start) continue;
                    // remove block, reinsert so that it begins at `dest`
                    moved.clear();
                    for (std::size_t i = 0; i < n; ++i)
                        if (i < start || i >= start + len) moved.push_back(cur[i]);
                    moved.insert(moved.begin() + static_cast<long>(dest), cur.begin() + static_cast<long>(start),
                                 cur.begin() + static_cast<long>(start + len));
                    const int gain = dist - lev(moved, r) - 1;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_start = start, best_len = len, best_dest = dest;
                    }
                }
            }
        }
        if (best_gain <= 0) break;
        std::vector<int> next;
        for (std::size_t i = 0; i < n; ++i)
            if (i < best_start || i >= best_start + best_len) next.push_back(cur[i]);
        next.insert(next.begin() + static_cast<long>(best_dest), cur.begin() + static_cast<long>(best_start),
                    cur.begin() + static_cast<long>(best_start + best_len));
        cur = std::move(next);
        dist = lev(cur, r);
        ++seg.shifts;
    }
    seg.edits = dist + seg.shifts;
    return seg;
}

/// Plain Levenshtein distance, no shifts.
inline int word_edit_distance(const Tokens& hyp, const Tokens& ref) {
    std::unordered_map<std::string, int> ids;
    auto encode = [&](const Tokens& t) {
        std::vector<int> out;
        for (const auto& w : t) out.push_back(ids.try_emplace(w, static_cast<int>(ids.size())).first->second);
        return out;
    };
    detail::EditDistance lev;
    return lev(encode(hyp), encode(ref));
}

struct TerStats {
    std::int64_t edits = 0;
    std::int64_t length = 0; // normaliser: reference (default) or hypothesis words
};

inline double ter_from_stats(const TerStats& st) {
    if (st.length == 0) return st.edits == 0 ? 0.0 : 100.0 * double(st.edits);
    return 100.0 * double(st.edits) / double(st.length);
}

inline std::vector<TerSegment> ter_segments(const EvalPair& pair) {
    pair.validate();
    std::vector<TerSegment> segs(pair.size());
    parallel_for(pair.size(), [&](std::size_t i) { segs[i] = ter_segment(pair.hypotheses[i], pair.references[i]); });
    return segs;
}

inline double ter(const EvalPair& pair, TerNormalization norm = TerNormalization::reference) {
    const auto segs = ter_segments(pair);
    TerStats st;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        st.edits += segs[i].edits;
        st.length += static_cast<std::int64_t>(norm == TerNormalization::reference ? pair.references[i].size()
                                                                                   : pair.hypotheses[i].size());
    }
    return ter_from_stats(st);
}

// ---------------------------------------------------------------------------
// Approximate randomization

enum class Metric { bleu, ter };

inline Metric parse_metric(std::string_view s) {
    if (s == "bleu") return Metric::bleu;
    if (s == "ter") return Metric::ter;
    throw InputError("evaluation", "unknown metric '" + std::string(s) + "'");
}
inline std::string_view metric_name(Metric m) { return m == Metric::bleu ? "bleu" : "ter"; }

inline constexpr std::size_t kDefaultRepetitions = 10000;
inline constexpr double kSignificanceLevel = 0.05;

namespace detail {

// Per-segment sufficient statistics so each permutation is a sum, not a
// rescoring.
struct SegmentStats {
    BleuStats bleu;
    TerStats ter;

    SegmentStats& operator+=(const SegmentStats& o) {
        bleu += o.bleu;
        ter.edits += o.ter.edits;
        ter.length += o.ter.length;
        return *this;
    }
    SegmentStats& operator-=(const SegmentStats& o) {
        bleu -= o.bleu;
        ter.edits -= o.ter.edits;
        ter.length -= o.ter.length;
        return *this;
    }
    double value(Metric m) const { return m == Metric::bleu ? bleu_from_stats(bleu) : ter_from_stats(ter); }
};

inline std::vector<SegmentStats> segment_stats(const EvalPair& p, Metric m) {
    std::vector<SegmentStats> out(p.size());
    parallel_for(p.size(), [&](std::size_t i) {
        if (m == Metric::bleu) {
            out[i].bleu = bleu_stats(p.hypotheses[i], p.references[i]);
        } else {
            out[i].ter = {ter_segment(p.hypotheses[i], p.references[i]).edits,
                          static_cast<std::int64_t>(p.references[i].size())};
        }
    });
    return out;
}

} // namespace detail

/// Paired approximate randomization. Each repetition swaps the two systems'
/// outputs per segment with probability 1/2 and compares the absolute
/// corpus-metric difference with the observed one. Repetition r draws from
/// its own generator seeded by (seed, r), so the p-value does not depend on
/// the thread count.
inline double ar_test(const EvalPair& a, const EvalPair& b, Metric metric,
                      std::size_t repetitions = kDefaultRepetitions, std::uint64_t seed = 0) {
    a.validate();
    b.validate();
    if (a.size() != b.size() || a.references != b.references)
        throw InputError("evaluation", "significance test needs both systems scored against the same references");
    if (repetitions < 1) throw InputError("evaluation", "repetitions must be >= 1");

    const auto sa = detail::segment_stats(a, metric);
    const auto sb = detail::segment_stats(b, metric);
    detail::SegmentStats total_a, total_b;
    for (std::size_t i = 0; i < sa.size(); ++i) total_a += sa[i], total_b += sb[i];
    const double observed = std::abs(total_a.value(metric) - total_b.value(metric));

    std::vector<std::uint8_t> at_least(repetitions);
    parallel_for(repetitions, [&](std::size_t r) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(std::uint64_t(r) >> 32)};
        std::mt19937_64 rng(seq);
        detail::SegmentStats pa = total_a, pb = total_b;
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sa.size(); ++i) {
            if (i % 64 == 0) bits = rng();
            if (bits & 1u) {
                pa -= sa[i], pa += sb[i];
                pb -= sb[i], pb += sa[i];
            }
            bits >>= 1;
        }
        at_least[r] = std::abs(pa.value(metric) - pb.value(metric)) >= observed;
    });
    std::size_t count = 0;
    for (const auto v : at_least) count += v;
    return double(count + 1) / double(repetitions + 1);
}

// ---------------------------------------------------------------------------
// Reports

struct MetricScores {
    double ter = 0;
    double bleu = 0;
    bool operator==(const MetricScores&) const = default;
};

struct Significance {
    std::string metric = "bleu";
    double p = 1.0;
    bool significant = false;
    std::size_t repetitions = kDefaultRepetitions;
    std::uint64_t seed = 0;
    bool operator==(const Significance&) const = default;
};

struct EvaluationReport {
    double ter = 0;   // percent, one decimal
    double bleu = 0;  // percent, one decimal
    std::vector<int> segment_edits;
    std::optional<MetricScores> baseline;
    std::optional<Significance> significance;

    bool operator==(const EvaluationReport&) const = default;
};

inline nlohmann::json to_json(const EvaluationReport& r) {
    nlohmann::json j{{"ter", r.ter}, {"bleu", r.bleu}, {"segment_edits", r.segment_edits}};
    if (r.baseline) j["baseline"] = {{"ter", r.baseline->ter}, {"bleu", r.baseline->bleu}};
    if (r.significance)
        j["significance"] = {{"metric", r.significance->metric},
                             {"p", r.significance->p},
                             {"significant", r.significance->significant},
                             {"repetitions", r.significance->repetitions},
                             {"seed", r.significance->seed}};
    return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
    EvaluationReport r;
    r.ter = j.at("ter").get<double>();
    r.bleu = j.at("bleu").get<double>();
    r.segment_edits = j.value("segment_edits", std::vector<int>{});
    if (j.contains("baseline")) r.baseline = MetricScores{j["baseline"].at("ter"), j["baseline"].at("bleu")};
    if (j.contains("significance")) {
        const auto& s = j["significance"];
        r.significance = Significance{s.value("metric", std::string("bleu")), s.at("p").get<double>(),
                                      s.at("significant").get<bool>(),
                                      s.value("repetitions", kDefaultRepetitions), s.value("seed", std::uint64_t{0})};
    }
    return r;
}

inline MetricScores score(const EvalPair& pair, TerNormalization norm = TerNormalization::reference) {
    return {round_half_up(ter(pair, norm)), round_half_up(bleu(pair))};
}

/// TER/BLEU of a system and, when given, of the copy-through baseline
/// (original sentences used as the modernized output).
inline EvaluationReport evaluate(const EvalPair& system, const std::optional<EvalPair>& baseline = std::nullopt,
                                 TerNormalization norm = TerNormalization::reference) {
    EvaluationReport r;
    const auto segs = ter_segments(system);
    TerStats st;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        r.segment_edits.push_back(segs[i].edits);
        st.edits += segs[i].edits;
        st.length += static_cast<std::int64_t>(norm == TerNormalization::reference ? system.references[i].size()
                                                                                   : system.hypotheses[i].size());
    }
    r.ter = round_half_up(ter_from_stats(st));
    r.bleu = round_half_up(bleu(system));
    if (baseline) r.baseline = score(*baseline, norm);
    return r;
}

inline Significance significance_test(const EvalPair& a, const EvalPair& b, Metric metric,
                                      std::size_t repetitions, std::uint64_t seed) {
    const double p = ar_test(a, b, metric, repetitions, seed);
    return {std::string(metric_name(metric)), p, p < kSignificanceLevel, repetitions, seed};
}

} // namespace histmod
