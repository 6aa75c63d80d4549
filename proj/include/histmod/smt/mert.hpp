#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "histmod/corpus.hpp"
#include "histmod/error.hpp"
#include "histmod/evaluation.hpp"
#include "histmod/parallel.hpp"
#include "histmod/smt/decoder.hpp"

namespace histmod::smt {

struct MertOptions {
    std::size_t nbest_size = 100;
    std::size_t restarts = 2;      // random starting points per iteration, besides the current weights
    std::size_t max_iterations = 10;
    double min_gain = 0.1;         // BLEU points
    std::uint64_t seed = 0;
};

/// One n-best entry with its precomputed sufficient statistics.
struct MertCandidate {
    FeatureVector features{};
    BleuStats stats;
    double sentence_bleu = 0;
};

using MertPool = std::vector<std::vector<MertCandidate>>; // per dev sentence

/// Tuning objective, compared lexicographically: corpus BLEU, then the sum
/// of smoothed sentence BLEU, which keeps the search informative when a
/// small dev set has no 4-gram matches.
struct MertObjective {
    double bleu = -1;
    double sentence_sum = -1;

    auto operator<=>(const MertObjective&) const = default;
};

struct LineSearchResult {
    double value = 0;
    MertObjective objective;
};

namespace detail {

inline std::size_t argmax_candidate(const std::vector<MertCandidate>& cands, const LogLinearWeights& w) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const double s = w.dot(cands[i].features);
        if (s > best_score) best_score = s, best = i;
    }
    return best;
}

struct Line {
    double slope;
    double intercept;
    std::size_t index;
    double start = -std::numeric_limits<double>::infinity();
};

/// Upper envelope of score(γ) = intercept + slope·γ. Each returned line is
/// the maximum from its `start` up to the next line's start.
inline std::vector<Line> upper_envelope(std::vector<Line> lines) {
    std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
        if (a.slope != b.slope) return a.slope < b.slope;
        if (a.intercept != b.intercept) return a.intercept > b.intercept;
        return a.index < b.index;
    });
    std::vector<Line> hull;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0 && lines[i].slope == lines[i - 1].slope) continue; // dominated or tied with a lower index
        Line l = lines[i];
        while (!hull.empty()) {
            const Line& h = hull.back();
            const double x = (h.intercept - l.intercept) / (l.slope - h.slope);
            if (x <= h.start) {
                hull.pop_back();
            } else {
                l.start = x;
                break;
            }
        }
        if (hull.empty()) l.start = -std::numeric_limits<double>::infinity();
        hull.push_back(l);
    }
    return hull;
}

} // namespace detail

inline MertObjective pool_objective(const MertPool& pool, const LogLinearWeights& w) {
    BleuStats total;
    double sum = 0;
    for (const auto& cands : pool) {
        if (cands.empty()) continue;
        const auto& c = cands[detail::argmax_candidate(cands, w)];
        total += c.stats;
        sum += c.sentence_bleu;
    }
    return {bleu_from_stats(total), sum};
}

/// Exact line search along feature `dim`: the objective is piecewise
/// constant in the weight, changing only at envelope breakpoints, so every
/// interval is evaluated once. The chosen value is the midpoint of the best
/// interval, or one unit beyond the outermost breakpoint for unbounded
/// intervals. Ties prefer the value closest to the current weight.
inline LineSearchResult line_search(const MertPool& pool, const LogLinearWeights& weights, std::size_t dim) {
    struct Event {
        double x;
        std::size_t sentence;
        std::size_t candidate;
    };
    std::vector<Event> events;
    std::vector<std::size_t> active(pool.size());
    BleuStats total;
    double sum = 0;
    for (std::size_t s = 0; s < pool.size(); ++s) {
        const auto& cands = pool[s];
        if (cands.empty()) continue;
        std::vector<detail::Line> lines;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            const double slope = cands[i].features[dim];
            lines.push_back({slope, weights.dot(cands[i].features) - weights.values[dim] * slope, i});
        }
        const auto hull = detail::upper_envelope(std::move(lines));
        active[s] = hull.front().index;
        total += cands[active[s]].stats;
        sum += cands[active[s]].sentence_bleu;
        for (std::size_t h = 1; h < hull.size(); ++h) events.push_back({hull[h].start, s, hull[h].index});
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.x < b.x; });

    const double current = weights.values[dim];
    LineSearchResult best{current, {-1, -1}};
    auto consider = [&](double value) {
        const MertObjective obj{bleu_from_stats(total), sum};
        if (obj > best.objective ||
            (obj == best.objective && std::abs(value - current) < std::abs(best.value - current)))
            best = {value, obj};
    };

    if (events.empty()) {
        consider(current);
        return best;
    }
    consider(events.front().x - 1.0);
    for (std::size_t e = 0; e < events.size();) {
        const double x = events[e].x;
        for (; e < events.size() && events[e].x == x; ++e) {
            const auto& ev = events[e];
            const auto& cands = pool[ev.sentence];
            total -= cands[active[ev.sentence]].stats;
            sum -= cands[active[ev.sentence]].sentence_bleu;
            active[ev.sentence] = ev.candidate;
            total += cands[ev.candidate].stats;
            sum += cands[ev.candidate].sentence_bleu;
        }
        consider(e < events.size() ? 0.5 * (x + events[e].x) : x + 1.0);
    }
    return best;
}

/// Coordinate ascent from `start` until no dimension improves the objective.
inline std::pair<LogLinearWeights, MertObjective> optimize_on_pool(const MertPool& pool, LogLinearWeights start) {
    MertObjective current = pool_objective(pool, start);
    for (int pass = 0; pass < 25; ++pass) {
        bool improved = false;
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            const auto r = line_search(pool, start, k);
            if (r.objective > current) {
                start.values[k] = r.value;
                current = r.objective;
                improved = true;
            }
        }
        if (!improved) break;
    }
    return {start, current};
}

/// Scales weights to unit L1 norm; argmax decisions are unchanged.
inline LogLinearWeights normalized(LogLinearWeights w) {
    double norm = 0;
    for (double v : w.values) norm += std::abs(v);
    if (norm > 0)
        for (double& v : w.values) v /= norm;
    return w;
}

/// Minimum error rate training on n-best lists. Each iteration decodes the
/// dev set with the current weights, merges the new n-best entries into the
/// pool and re-optimizes from the current weights plus `restarts` random
/// points. Returns the weights with the highest decoded dev BLEU among all
/// iterations, the initial weights included.
inline LogLinearWeights tune_weights(const TranslationModel& model, const ParallelCorpus& dev,
                                     const MertOptions& options = {}) {
    if (dev.size() == 0) throw TrainingError("smt", "tuning needs a non-empty dev set");
    dev.check_aligned();
    if (options.nbest_size < 1) throw TrainingError("smt", "n-best size must be >= 1");

    const auto sources = token_lists(dev.source);
    const auto references = token_lists(dev.target);
    MertPool pool(dev.size());
    std::vector<std::set<Tokens>> seen(dev.size());
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);

    TranslationModel working = model;
    LogLinearWeights best_weights = model.weights;
    double best_bleu = -1;
    double previous_bleu = -1;
    const auto opts = DecodeOptions::from(model);

    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        std::vector<std::vector<DecodeResult>> nbest(dev.size());
        parallel_for(dev.size(), [&](std::size_t i) {
            nbest[i] = decode_nbest(working, sources[i], options.nbest_size, opts);
        });
        BleuStats decoded;
        std::size_t added = 0;
        for (std::size_t i = 0; i < dev.size(); ++i) {
            decoded += bleu_stats(nbest[i].front().output, references[i]);
            for (auto& r : nbest[i]) {
                if (!seen[i].insert(r.output).second) continue;
                const auto st = bleu_stats(r.output, references[i]);
                pool[i].push_back({r.features, st, histmod::sentence_bleu(st)});
                ++added;
            }
        }
        const double dev_bleu = bleu_from_stats(decoded);
        if (dev_bleu > best_bleu) best_bleu = dev_bleu, best_weights = working.weights;
        if (it > 0 && (dev_bleu - previous_bleu < options.min_gain || added == 0)) break;
        previous_bleu = std::max(previous_bleu, dev_bleu);
        if (it + 1 == options.max_iterations) break;

        auto [weights, objective] = optimize_on_pool(pool, working.weights);
        for (std::size_t r = 0; r < options.restarts; ++r) {
            LogLinearWeights start;
            for (double& v : start.values) v = uniform(rng);
            auto [w, obj] = optimize_on_pool(pool, start);
            if (obj > objective) weights = w, objective = obj;
        }
        working.weights = normalized(weights);
    }
    return best_weights;
}

} // namespace histmod::smt
