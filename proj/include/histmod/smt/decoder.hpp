#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "histmod/error.hpp"
#include "histmod/smt/alignment.hpp"
#include "histmod/smt/language_model.hpp"
#include "histmod/smt/phrase_table.hpp"

namespace histmod::smt {

inline constexpr std::size_t kFeatureCount = 6;
using FeatureVector = std::array<double, kFeatureCount>;

enum Feature : std::size_t {
    kLm = 0,
    kPhraseForward,
    kPhraseBackward,
    kWordPenalty,
    kPhrasePenalty,
    kDistortion,
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "lm", "phrase_forward", "phrase_backward", "word_penalty", "phrase_penalty", "distortion"};

/// Log-linear weights in the fixed feature order above. Feature values:
/// LM and phrase probabilities are natural logs; the three penalties are
/// negated counts (target words, phrases, total jump distance), so a
/// positive weight penalises.
struct LogLinearWeights {
    FeatureVector values{1.0, 1.0, 1.0, 0.0, 0.0, 0.5};

    double dot(const FeatureVector& f) const {
        double s = 0;
        for (std::size_t k = 0; k < kFeatureCount; ++k) s += values[k] * f[k];
        return s;
    }

    bool operator==(const LogLinearWeights&) const = default;

    std::string serialize() const {
        std::string out;
        for (std::size_t k = 0; k < kFeatureCount; ++k)
            out += std::string(kFeatureNames[k]) + ' ' + format_double(values[k]) + '\n';
        return out;
    }

    static LogLinearWeights parse(std::string_view text) {
        LogLinearWeights w;
        std::size_t k = 0;
        for (auto line : split_on(text, "\n")) {
            const auto parts = split_whitespace(line);
            if (parts.empty()) continue;
            if (parts.size() != 2 || k >= kFeatureCount || parts[0] != kFeatureNames[k])
                throw InputError("smt", "weights file must list " +
                                            std::to_string(kFeatureCount) +
                                            " 'name value' lines in the fixed order");
            w.values[k++] = parse_double(parts[1], parts[0]);
            if (!std::isfinite(w.values[k - 1])) throw InputError("smt", "weights must be finite");
        }
        if (k != kFeatureCount) throw InputError("smt", "weights file is incomplete");
        return w;
    }
};

struct TranslationModel {
    LexicalTable lexical_forward;  // t(target | source)
    LexicalTable lexical_backward; // t(source | target)
    PhraseTable phrases;
    NgramLm lm;
    LogLinearWeights weights;
    std::size_t beam_size = 6;
    int distortion_limit = 6;
};

struct DecodeOptions {
    static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

    std::size_t beam_size = 6;
    int distortion_limit = 6;       // < 0: unlimited
    std::size_t option_limit = 20;  // translation options kept per span; 0: all

    static DecodeOptions from(const TranslationModel& m) {
        DecodeOptions o;
        o.beam_size = m.beam_size;
        o.distortion_limit = m.distortion_limit;
        return o;
    }
    static DecodeOptions exhaustive() { return {kUnlimited, -1, 0}; }
};

/// One phrase application: source span [begin, end) and its translation.
struct DerivationStep {
    std::size_t begin = 0;
    std::size_t end = 0;
    Tokens target;
    double forward = 1;
    double backward = 1;

    bool operator==(const DerivationStep&) const = default;
};

struct DecodeResult {
    Tokens output;
    FeatureVector features{};
    double score = 0;
    std::vector<DerivationStep> derivation; // in application order
};

/// Feature values of a complete derivation, recomputed from scratch.
inline FeatureVector score_derivation(const TranslationModel& model, const Tokens& source,
                                      const std::vector<DerivationStep>& derivation) {
    FeatureVector f{};
    Tokens output;
    std::size_t last_end = 0;
    std::vector<bool> covered(source.size());
    for (const auto& step : derivation) {
        if (step.begin >= step.end || step.end > source.size())
            throw InputError("smt", "derivation step outside the source sentence");
        for (std::size_t i = step.begin; i < step.end; ++i) {
            if (covered[i]) throw InputError("smt", "derivation covers a source word twice");
            covered[i] = true;
        }
        f[kPhraseForward] += std::log(step.forward);
        f[kPhraseBackward] += std::log(step.backward);
        f[kWordPenalty] -= double(step.target.size());
        f[kPhrasePenalty] -= 1;
        f[kDistortion] -= std::abs(double(step.begin) - double(last_end));
        last_end = step.end;
        output.insert(output.end(), step.target.begin(), step.target.end());
    }
    if (std::find(covered.begin(), covered.end(), false) != covered.end())
        throw InputError("smt", "derivation leaves source words uncovered");
    f[kLm] = model.lm.score_sentence(output).total;
    return f;
}

namespace detail {

struct Option {
    std::size_t begin, end;
    const Tokens* target;
    std::vector<WordId> target_ids;
    double forward, backward;
    FeatureVector local{}; // everything but LM and distortion
    double local_score = 0; // weighted local + estimated LM
};

struct Hyp {
    const Hyp* prev = nullptr;
    const Option* option = nullptr;
    std::vector<std::uint64_t> coverage;
    std::size_t covered = 0;
    std::size_t last_end = 0;
    std::vector<WordId> lm_state; // last order-1 target ids
    FeatureVector features{};
    double score = 0;
    double future = 0;
    std::vector<const Hyp*> arcs; // recombined alternatives with the same state

    bool is_covered(std::size_t i) const { return (coverage[i / 64] >> (i % 64)) & 1u; }
    std::size_t first_gap(std::size_t n) const {
        for (std::size_t i = 0; i < n; ++i)
            if (!is_covered(i)) return i;
        return n;
    }
    std::string state_key() const {
        std::string k(reinterpret_cast<const char*>(coverage.data()), coverage.size() * 8);
        k.append(reinterpret_cast<const char*>(&last_end), sizeof last_end);
        k.append(reinterpret_cast<const char*>(lm_state.data()), lm_state.size() * sizeof(WordId));
        return k;
    }
};

class StackDecoder {
public:
    StackDecoder(const TranslationModel& model, const Tokens& source, const DecodeOptions& opts)
        : model_(model), source_(source), opts_(opts), n_(source.size()) {
        collect_options();
        compute_future_costs();
    }

    /// Runs the search; returns the final stack (complete hypotheses).
    std::vector<const Hyp*> search() {
        std::vector<std::unordered_map<std::string, Hyp*>> stacks(n_ + 1);
        auto& root = arena_.emplace_back();
        root.coverage.assign((n_ + 63) / 64, 0);
        root.lm_state = {NgramLm::kBosId};
        root.future = future_[0][n_];
        stacks[0].emplace(root.state_key(), &root);

        for (std::size_t s = 0; s < n_; ++s) {
            for (const Hyp* h : prune(stacks[s])) expand(*h, stacks);
        }
        std::vector<const Hyp*> finals;
        for (const auto& [k, h] : stacks[n_]) finals.push_back(h);
        std::sort(finals.begin(), finals.end(), better);
        return finals;
    }

    DecodeResult result_of(const std::vector<const Hyp*>& path_back_to_front, double score,
                           const FeatureVector& features) const {
        DecodeResult r;
        r.score = score;
        r.features = features;
        for (auto it = path_back_to_front.rbegin(); it != path_back_to_front.rend(); ++it) {
            const Option* o = (*it)->option;
            r.output.insert(r.output.end(), o->target->begin(), o->target->end());
            r.derivation.push_back({o->begin, o->end, *o->target, o->forward, o->backward});
        }
        return r;
    }

    static std::vector<const Hyp*> chain(const Hyp* h) {
        std::vector<const Hyp*> out;
        for (; h && h->option; h = h->prev) out.push_back(h);
        return out;
    }

private:
    static bool better(const Hyp* a, const Hyp* b) {
        const double sa = a->score + a->future, sb = b->score + b->future;
        if (sa != sb) return sa > sb;
        return a->score > b->score;
    }

    void collect_options() {
        const std::size_t max_len = std::max<std::size_t>(1, model_.phrases.max_phrase_len());
        by_begin_.assign(n_, {});
        for (std::size_t b = 0; b < n_; ++b) {
            std::string key;
            for (std::size_t e = b + 1; e <= n_ && e - b <= max_len; ++e) {
                if (e > b + 1) key += ' ';
                key += source_[e - 1];
                const auto* opts = model_.phrases.find(key);
                if (!opts) continue;
                std::vector<Option> span;
                for (const auto& po : *opts) span.push_back(make_option(b, e, &po.target, po.forward, po.backward));
                keep_best(span);
                for (auto& o : span) by_begin_[b].push_back(std::move(o));
            }
            const bool has_single = std::any_of(by_begin_[b].begin(), by_begin_[b].end(),
                                                [&](const Option& o) { return o.end == b + 1; });
            if (!has_single) {
                // out-of-vocabulary: copy the word through
                copies_.push_back({source_[b]});
                by_begin_[b].push_back(make_option(b, b + 1, &copies_.back(), 1.0, 1.0));
            }
        }
    }

    Option make_option(std::size_t b, std::size_t e, const Tokens* target, double fwd, double bwd) {
        Option o{b, e, target, {}, fwd, bwd};
        for (const auto& t : *target) o.target_ids.push_back(model_.lm.id(t));
        o.local[kPhraseForward] = std::log(fwd);
        o.local[kPhraseBackward] = std::log(bwd);
        o.local[kWordPenalty] = -double(target->size());
        o.local[kPhrasePenalty] = -1;
        double lm_est = 0;
        for (std::size_t i = 0; i < o.target_ids.size(); ++i)
            lm_est += model_.lm.log10_prob(std::span<const WordId>(o.target_ids.data(), i), o.target_ids[i]);
        o.local_score = model_.weights.dot(o.local) + model_.weights.values[kLm] * lm_est * std::numbers::ln10;
        return o;
    }

    void keep_best(std::vector<Option>& span) const {
        std::stable_sort(span.begin(), span.end(),
                         [](const Option& a, const Option& b) { return a.local_score > b.local_score; });
        if (opts_.option_limit && span.size() > opts_.option_limit) span.resize(opts_.option_limit);
    }

    void compute_future_costs() {
        const double ninf = -std::numeric_limits<double>::infinity();
        future_.assign(n_ + 1, std::vector<double>(n_ + 1, ninf));
        for (std::size_t b = 0; b < n_; ++b)
            for (const auto& o : by_begin_[b]) future_[b][o.end] = std::max(future_[b][o.end], o.local_score);
        for (std::size_t len = 1; len <= n_; ++len)
            for (std::size_t b = 0; b + len <= n_; ++b)
                for (std::size_t m = b + 1; m < b + len; ++m)
                    future_[b][b + len] = std::max(future_[b][b + len], future_[b][m] + future_[m][b + len]);
        for (std::size_t b = 0; b <= n_; ++b) future_[b][b] = 0;
    }

    double future_of(const Hyp& h) const {
        double f = 0;
        for (std::size_t i = 0; i < n_;) {
            if (h.is_covered(i)) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < n_ && !h.is_covered(j)) ++j;
            f += future_[i][j];
            i = j;
        }
        return f;
    }

    std::vector<const Hyp*> prune(const std::unordered_map<std::string, Hyp*>& stack) const {
        std::vector<const Hyp*> hyps;
        hyps.reserve(stack.size());
        for (const auto& [k, h] : stack) hyps.push_back(h);
        std::sort(hyps.begin(), hyps.end(), better);
        if (hyps.size() > opts_.beam_size) hyps.resize(opts_.beam_size);
        return hyps;
    }

    void expand(const Hyp& h, std::vector<std::unordered_map<std::string, Hyp*>>& stacks) {
        const auto& w = model_.weights;
        const long limit = opts_.distortion_limit;
        for (std::size_t b = 0; b < n_; ++b) {
            if (h.is_covered(b)) continue;
            const long jump = std::labs(long(b) - long(h.last_end));
            if (limit >= 0 && jump > limit) continue;
            for (const auto& o : by_begin_[b]) {
                bool free = true;
                for (std::size_t i = o.begin; i < o.end && free; ++i) free = !h.is_covered(i);
                if (!free) continue;

                Hyp next;
                next.prev = &h;
                next.option = &o;
                next.coverage = h.coverage;
                for (std::size_t i = o.begin; i < o.end; ++i) next.coverage[i / 64] |= std::uint64_t{1} << (i % 64);
                next.covered = h.covered + (o.end - o.begin);
                next.last_end = o.end;
                if (limit >= 0) {
                    // the first gap must stay reachable from here
                    const std::size_t gap = next.first_gap(n_);
                    if (gap < n_ && gap < o.end && long(o.end - gap) > limit) continue;
                }

                FeatureVector delta = o.local;
                delta[kDistortion] = -double(jump);
                std::vector<WordId> history = h.lm_state;
                double lm = 0;
                for (const WordId t : o.target_ids) {
                    lm += model_.lm.log10_prob(history, t);
                    history.push_back(t);
                }
                if (next.covered == n_) lm += model_.lm.log10_prob(history, NgramLm::kEosId);
                delta[kLm] = lm * std::numbers::ln10;
                const std::size_t keep = static_cast<std::size_t>(std::max(0, model_.lm.order() - 1));
                if (history.size() > keep) history.erase(history.begin(), history.end() - static_cast<long>(keep));
                next.lm_state = std::move(history);

                for (std::size_t k = 0; k < kFeatureCount; ++k) next.features[k] = h.features[k] + delta[k];
                next.score = h.score + w.dot(delta);
                next.future = future_of(next);
                auto& target_stack = stacks[next.covered];
                add(std::move(next), target_stack);
            }
        }
    }

    void add(Hyp&& cand, std::unordered_map<std::string, Hyp*>& stack) {
        const std::string key = cand.state_key();
        Hyp& stored = arena_.emplace_back(std::move(cand));
        auto [it, fresh] = stack.try_emplace(key, &stored);
        if (fresh) return;
        Hyp* incumbent = it->second;
        if (stored.score > incumbent->score) {
            stored.arcs = std::move(incumbent->arcs);
            incumbent->arcs.clear();
            stored.arcs.push_back(incumbent);
            it->second = &stored;
        } else {
            incumbent->arcs.push_back(&stored);
        }
    }

    const TranslationModel& model_;
    const Tokens& source_;
    DecodeOptions opts_;
    std::size_t n_;
    std::deque<Tokens> copies_;
    std::vector<std::vector<Option>> by_begin_;
    std::vector<std::vector<double>> future_;
    std::deque<Hyp> arena_;
};

} // namespace detail

/// Stack decoding: stacks by number of covered source words, histogram
/// pruning to the beam on model score plus future-cost estimate,
/// recombination on (coverage, last position, LM state).
inline DecodeResult decode(const TranslationModel& model, const Tokens& source,
                           const DecodeOptions& opts) {
    if (source.empty()) return {};
    detail::StackDecoder decoder(model, source, opts);
    auto finals = decoder.search();
    if (finals.empty() && opts.distortion_limit != 0) {
        DecodeOptions monotone = opts;
        monotone.distortion_limit = 0;
        return decode(model, source, monotone);
    }
    if (finals.empty()) throw DecodeError("smt", "decoder produced no complete hypothesis");
    const auto* best = *std::max_element(finals.begin(), finals.end(),
                                         [](auto* a, auto* b) { return a->score < b->score; });
    return decoder.result_of(detail::StackDecoder::chain(best), best->score, best->features);
}

inline DecodeResult decode(const TranslationModel& model, const Tokens& source) {
    return decode(model, source, DecodeOptions::from(model));
}

/// Up to `n` distinct outputs, best first. Alternative paths come from the
/// hypotheses folded away by recombination.
inline std::vector<DecodeResult> decode_nbest(const TranslationModel& model, const Tokens& source,
                                              std::size_t n, const DecodeOptions& opts) {
    if (source.empty()) return {DecodeResult{}};
    detail::StackDecoder decoder(model, source, opts);
    auto finals = decoder.search();
    if (finals.empty()) return {decode(model, source, opts)};

    struct Path {
        std::vector<const detail::Hyp*> nodes; // final hypothesis first
        double score;
        FeatureVector features;
        std::size_t detour_from;
    };
    auto worse = [](const Path& a, const Path& b) { return a.score < b.score; };
    std::priority_queue<Path, std::vector<Path>, decltype(worse)> queue(worse);
    for (const auto* f : finals) queue.push({detail::StackDecoder::chain(f), f->score, f->features, 0});

    std::vector<DecodeResult> out;
    std::set<Tokens> seen;
    const std::size_t max_pops = std::max<std::size_t>(n * 50, 100);
    for (std::size_t pops = 0; !queue.empty() && out.size() < n && pops < max_pops; ++pops) {
        Path p = queue.top();
        queue.pop();
        auto r = decoder.result_of(p.nodes, p.score, p.features);
        if (seen.insert(r.output).second) out.push_back(std::move(r));
        for (std::size_t k = p.detour_from; k < p.nodes.size(); ++k) {
            for (const auto* alt : p.nodes[k]->arcs) {
                Path q;
                q.nodes.assign(p.nodes.begin(), p.nodes.begin() + static_cast<long>(k));
                for (const auto* h : detail::StackDecoder::chain(alt)) q.nodes.push_back(h);
                q.score = p.score - p.nodes[k]->score + alt->score;
                for (std::size_t f = 0; f < kFeatureCount; ++f)
                    q.features[f] = p.features[f] - p.nodes[k]->features[f] + alt->features[f];
                q.detour_from = k + 1;
                queue.push(std::move(q));
            }
        }
    }
    return out;
}

} // namespace histmod::smt
