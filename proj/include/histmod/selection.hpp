#pragma once

#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "histmod/error.hpp"
#include "histmod/parallel.hpp"
#include "histmod/util.hpp"

namespace histmod {

struct FdaConfig {
    int max_ngram_order = 3;
    double decay_factor = 0.5;
    bool length_normalize = true;
    std::size_t budget = 0;

    void validate() const {
        if (!(decay_factor > 0.0 && decay_factor < 1.0))
            throw ValidationError("selection", "decay factor must lie in (0, 1)");
        if (max_ngram_order < 1) throw ValidationError("selection", "n-gram order must be >= 1");
    }
};

/// Seed feature set plus the per-feature count of occurrences already
/// selected. Feature weights only decay, which is what makes lazy
/// re-scoring sound.
class FdaState {
public:
    FdaState(const std::vector<Tokens>& seed, const FdaConfig& config) : order_(config.max_ngram_order) {
        config.validate();
        for (const auto& s : seed)
            for_each_ngram(s, [&](const std::string& f) {
                ids_.try_emplace(f, static_cast<std::uint32_t>(ids_.size()));
            });
        selected_counts_.assign(ids_.size(), 0);
    }

    /// Ids of the seed features occurring in `sentence`, one entry per
    /// occurrence.
    std::vector<std::uint32_t> seed_occurrences(const Tokens& sentence) const {
        std::vector<std::uint32_t> out;
        for_each_ngram(sentence, [&](const std::string& f) {
            if (const auto it = ids_.find(f); it != ids_.end()) out.push_back(it->second);
        });
        return out;
    }

    double weight(std::uint32_t feature, double decay) const {
        return std::pow(decay, static_cast<double>(selected_counts_[feature]));
    }

    void mark_selected(const std::vector<std::uint32_t>& occurrences) {
        for (const auto f : occurrences) ++selected_counts_[f];
    }

    std::size_t feature_count() const { return ids_.size(); }
    std::uint32_t selected_count(const std::string& feature) const {
        const auto it = ids_.find(feature);
        return it == ids_.end() ? 0 : selected_counts_[it->second];
    }
    bool is_seed_feature(const std::string& feature) const { return ids_.contains(feature); }

    template <typename Fn>
    void for_each_ngram(const Tokens& s, Fn&& fn) const {
        for (std::size_t i = 0; i < s.size(); ++i) {
            std::string f;
            for (int n = 1; n <= order_ && i + static_cast<std::size_t>(n) <= s.size(); ++n) {
                if (n > 1) f += ' ';
                f += s[i + static_cast<std::size_t>(n) - 1];
                fn(f);
            }
        }
    }

private:
    int order_;
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<std::uint32_t> selected_counts_;
};

namespace detail {
inline double fda_score_occurrences(const std::vector<std::uint32_t>& occ, std::size_t length,
                                    const FdaState& state, const FdaConfig& config) {
    if (length == 0) return 0.0;
    double sum = 0.0;
    for (const auto f : occ) sum += state.weight(f, config.decay_factor);
    return config.length_normalize ? sum / static_cast<double>(length) : sum;
}
} // namespace detail

inline double fda_score(const Tokens& sentence, const FdaState& state, const FdaConfig& config) {
    return detail::fda_score_occurrences(state.seed_occurrences(sentence), sentence.size(), state,
                                         config);
}

struct FdaPick {
    std::size_t index;
    double score;

    bool operator==(const FdaPick&) const = default;
};

/// Greedy FDA selection with a lazy max-queue: pop, rescore, and accept only
/// if the fresh score still beats the next stored (upper-bound) score;
/// otherwise push back. Ties go to the lower pool index.
inline std::vector<FdaPick> fda_select(const std::vector<Tokens>& pool,
                                       const std::vector<Tokens>& seed, const FdaConfig& config) {
    config.validate();
    FdaState state(seed, config);
    std::size_t budget = config.budget;
    if (budget > pool.size()) {
        warn("selection budget " + std::to_string(budget) + " exceeds pool size " +
             std::to_string(pool.size()) + "; selecting the whole pool");
        budget = pool.size();
    }

    std::vector<std::vector<std::uint32_t>> occurrences(pool.size());
    std::vector<double> initial(pool.size());
    parallel_for(pool.size(), [&](std::size_t i) {
        occurrences[i] = state.seed_occurrences(pool[i]);
        initial[i] = detail::fda_score_occurrences(occurrences[i], pool[i].size(), state, config);
    });

    struct Entry {
        double score;
        std::size_t index;
    };
    // true when a ranks strictly below b
    auto below = [](const Entry& a, const Entry& b) {
        return a.score < b.score || (a.score == b.score && a.index > b.index);
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(below)> queue(below);
    for (std::size_t i = 0; i < pool.size(); ++i) queue.push({initial[i], i});

    std::vector<FdaPick> picks;
    picks.reserve(budget);
    while (picks.size() < budget && !queue.empty()) {
        Entry top = queue.top();
        queue.pop();
        top.score = detail::fda_score_occurrences(occurrences[top.index], pool[top.index].size(),
                                                  state, config);
        if (queue.empty() || !below(top, queue.top())) {
            picks.push_back({top.index, top.score});
            state.mark_selected(occurrences[top.index]);
        } else {
            queue.push(top);
        }
    }
    return picks;
}

} // namespace histmod
