#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "histmod/error.hpp"
#include "histmod/smt/vocab.hpp"
#include "histmod/util.hpp"

namespace histmod::smt {

inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "<unk>";

struct LmOptions {
    int order = 5;
    /// Words seen fewer times than this are mapped to <unk>; 0 keeps all.
    std::size_t unk_threshold = 0;
    double fallback_discount = 0.75;
};

struct LmSentenceScore {
    double total = 0;               // natural log
    std::vector<double> per_token;  // one term per word plus </s>
};

/// Backoff n-gram model holding log10 probabilities and backoff weights, the
/// same numbers that go into an ARPA file. Training produces interpolated
/// modified Kneser-Ney estimates in this form.
class NgramLm {
public:
    static constexpr WordId kUnkId = 0;
    static constexpr WordId kBosId = 1;
    static constexpr WordId kEosId = 2;

    struct Entry {
        double log10_prob = 0;
        double log10_backoff = 0;
    };

    NgramLm() : NgramLm(1) {}
    explicit NgramLm(int order) : order_(order), tables_(static_cast<std::size_t>(order)) {
        vocab_.intern(std::string(kUnk));
        vocab_.intern(std::string(kBos));
        vocab_.intern(std::string(kEos));
    }

    int order() const { return order_; }
    const Vocab& vocab() const { return vocab_; }
    WordId id(const std::string& w) const { return vocab_.find(w, kUnkId); }

    /// Words with a predictive distribution: everything except <s>.
    std::vector<std::string> predicted_vocabulary() const {
        std::vector<std::string> out;
        for (const auto& w : vocab_.words())
            if (w != kBos) out.push_back(w);
        return out;
    }

    /// log10 p(word | context); only the last order-1 context ids matter.
    double log10_prob(std::span<const WordId> context, WordId word) const {
        const std::size_t max_ctx = static_cast<std::size_t>(order_ - 1);
        if (context.size() > max_ctx) context = context.subspan(context.size() - max_ctx);
        double backoff = 0;
        std::string key;
        for (std::size_t skip = 0; skip <= context.size(); ++skip) {
            const auto ctx = context.subspan(skip);
            key = pack(ctx);
            append(key, word);
            const auto& table = tables_[ctx.size()];
            if (const auto it = table.find(key); it != table.end()) return backoff + it->second.log10_prob;
            if (!ctx.empty()) {
                const auto& lower = tables_[ctx.size() - 1];
                if (const auto h = lower.find(pack(ctx)); h != lower.end())
                    backoff += h->second.log10_backoff;
            }
        }
        // ids outside the vocabulary score as <unk>
        const WordId unk = kUnkId;
        return backoff + tables_[0].at(pack(std::span<const WordId>(&unk, 1))).log10_prob;
    }

    double prob(const std::string& word, const std::vector<std::string>& context) const {
        std::vector<WordId> ctx;
        for (const auto& w : context) ctx.push_back(id(w));
        return std::pow(10.0, log10_prob(ctx, id(word)));
    }

    /// Natural-log probability of a whole sentence, </s> included.
    LmSentenceScore score_sentence(const Tokens& sentence) const {
        LmSentenceScore out;
        std::vector<WordId> history{kBosId};
        auto step = [&](WordId w) {
            const double ln = log10_prob(history, w) * std::numbers::ln10;
            out.per_token.push_back(ln);
            out.total += ln;
            history.push_back(w);
        };
        for (const auto& w : sentence) step(id(w));
        step(kEosId);
        return out;
    }

    // -- construction ------------------------------------------------------
    Vocab& mutable_vocab() { return vocab_; }
    void set_entry(std::span<const WordId> ngram, Entry e) { tables_[ngram.size() - 1][pack(ngram)] = e; }
    const Entry* find_entry(std::span<const WordId> ngram) const {
        const auto& t = tables_[ngram.size() - 1];
        const auto it = t.find(pack(ngram));
        return it == t.end() ? nullptr : &it->second;
    }
    std::size_t ngram_count(int n) const { return tables_[static_cast<std::size_t>(n - 1)].size(); }

    // -- ARPA --------------------------------------------------------------
    std::string to_arpa() const {
        std::ostringstream out;
        out << "\\data\\\n";
        for (int n = 1; n <= order_; ++n) out << "ngram " << n << '=' << ngram_count(n) << '\n';
        for (int n = 1; n <= order_; ++n) {
            out << "\n\\" << n << "-grams:\n";
            std::vector<std::pair<std::string, const Entry*>> rows;
            for (const auto& [k, e] : tables_[static_cast<std::size_t>(n - 1)]) {
                std::string text;
                for (const WordId w : unpack(k)) {
                    if (!text.empty()) text += ' ';
                    text += vocab_.word(w);
                }
                rows.emplace_back(std::move(text), &e);
            }
            std::sort(rows.begin(), rows.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (const auto& [text, e] : rows) {
                out << format_double(e->log10_prob) << '\t' << text;
                if (n < order_) out << '\t' << format_double(e->log10_backoff);
                out << '\n';
            }
        }
        out << "\n\\end\\\n";
        return out.str();
    }

    static NgramLm from_arpa(std::string_view text) {
        std::vector<std::vector<std::string>> sections;
        int order = 0;
        int current = -1;
        std::vector<std::tuple<int, std::vector<std::string>, Entry>> rows;
        for (auto raw : split_on(text, "\n")) {
            const auto line = trim(raw);
            if (line.empty() || line == "\\data\\" || line == "\\end\\") continue;
            if (line.rfind("ngram ", 0) == 0) {
                const auto eq = line.find('=');
                order = std::max(order, static_cast<int>(parse_double(line.substr(6, eq - 6), "ngram order")));
                continue;
            }
            if (line.front() == '\\') {
                current = static_cast<int>(parse_double(line.substr(1, line.find('-') - 1), "section"));
                continue;
            }
            if (current < 1) throw InputError("smt", "ARPA entry outside an n-gram section");
            const auto fields = split_whitespace(line);
            const std::size_t n = static_cast<std::size_t>(current);
            if (fields.size() != n + 1 && fields.size() != n + 2)
                throw InputError("smt", "malformed ARPA line: " + std::string(line));
            Entry e{parse_double(fields[0], "log10 prob"),
                    fields.size() == n + 2 ? parse_double(fields[n + 1], "backoff") : 0.0};
            rows.emplace_back(current, std::vector<std::string>(fields.begin() + 1, fields.begin() + 1 + static_cast<long>(n)), e);
        }
        if (order < 1) throw InputError("smt", "ARPA file declares no n-gram orders");
        NgramLm lm(order);
        for (const auto& [n, words, e] : rows) {
            std::vector<WordId> ids;
            for (const auto& w : words) ids.push_back(lm.vocab_.intern(w));
            lm.set_entry(ids, e);
        }
        return lm;
    }

private:
    static void append(std::string& key, WordId w) {
        char buf[sizeof(WordId)];
        std::memcpy(buf, &w, sizeof w);
        key.append(buf, sizeof buf);
    }
    static std::string pack(std::span<const WordId> ids) {
        std::string key;
        key.reserve(ids.size() * sizeof(WordId));
        for (const WordId w : ids) append(key, w);
        return key;
    }
    static std::vector<WordId> unpack(const std::string& key) {
        std::vector<WordId> ids(key.size() / sizeof(WordId));
        std::memcpy(ids.data(), key.data(), key.size());
        return ids;
    }

    int order_;
    Vocab vocab_;
    std::vector<std::unordered_map<std::string, Entry>> tables_;
};

namespace detail {

struct PackedHash {
    std::size_t operator()(const std::vector<WordId>& v) const noexcept {
        std::size_t h = 1469598103934665603ull;
        for (const WordId w : v) h = (h ^ w) * 1099511628211ull;
        return h;
    }
};

using NgramCounts = std::unordered_map<std::vector<WordId>, std::uint64_t, PackedHash>;

struct ContextStats {
    std::uint64_t total = 0;
    std::array<std::uint64_t, 3> kinds{}; // followers with adjusted count 1, 2, 3+
};

} // namespace detail

/// Interpolated modified Kneser-Ney.
///
/// Top-order n-grams and n-grams starting with <s> keep raw counts; other
/// lower-order n-grams use left-continuation counts. Discounts D1, D2, D3+
/// per order come from count-of-counts; when those are degenerate (a zero
/// count-of-count or a discount outside (0, k]) the order falls back to a
/// flat discount. The unigram level interpolates with a uniform
/// distribution over the predicted vocabulary, which is what gives <unk>
/// its mass.
inline NgramLm train_lm(const std::vector<Tokens>& corpus, LmOptions options = {}) {
    if (options.order < 1) throw TrainingError("smt", "LM order must be >= 1");
    if (corpus.empty()) throw TrainingError("smt", "cannot train a language model on an empty corpus");

    const auto order = static_cast<std::size_t>(options.order);
    NgramLm lm(options.order);
    std::map<std::string, std::size_t> freq;
    for (const auto& s : corpus)
        for (const auto& w : s) ++freq[w];
    for (const auto& [w, c] : freq)
        if (c >= options.unk_threshold) lm.mutable_vocab().intern(w);

    // raw counts, index n-1
    std::vector<detail::NgramCounts> raw(order);
    for (const auto& s : corpus) {
        std::vector<WordId> toks{NgramLm::kBosId};
        for (const auto& w : s) toks.push_back(lm.id(w));
        toks.push_back(NgramLm::kEosId);
        for (std::size_t end = 1; end < toks.size(); ++end)
            for (std::size_t n = 1; n <= order && n <= end + 1; ++n)
                ++raw[n - 1][std::vector<WordId>(toks.begin() + static_cast<long>(end + 1 - n),
                                                 toks.begin() + static_cast<long>(end + 1))];
    }
    raw[0][{NgramLm::kBosId}] += corpus.size(); // context-only entry

    // adjusted counts
    std::vector<detail::NgramCounts> adj(order);
    adj[order - 1] = raw[order - 1];
    for (std::size_t n = order - 1; n >= 1; --n) {
        auto& a = adj[n - 1];
        for (const auto& [g, c] : raw[n]) ++a[std::vector<WordId>(g.begin() + 1, g.end())];
        for (const auto& [g, c] : raw[n - 1])
            if (g.front() == NgramLm::kBosId) a[g] = c;
    }

    // discounts per order
    std::vector<std::array<double, 3>> disc(order);
    for (std::size_t n = 0; n < order; ++n) {
        std::array<std::uint64_t, 5> coc{};
        for (const auto& [g, c] : adj[n]) {
            if (n == 0 && g.front() == NgramLm::kBosId) continue;
            if (c >= 1 && c <= 4) ++coc[c];
        }
        std::array<double, 3> d{};
        bool ok = coc[1] && coc[2] && coc[3] && coc[4];
        if (ok) {
            const double y = double(coc[1]) / double(coc[1] + 2 * coc[2]);
            for (std::size_t k = 1; k <= 3; ++k) {
                d[k - 1] = double(k) - double(k + 1) * y * double(coc[k + 1]) / double(coc[k]);
                ok = ok && d[k - 1] > 0 && d[k - 1] <= double(k);
            }
        }
        disc[n] = ok ? d : std::array<double, 3>{options.fallback_discount, options.fallback_discount,
                                                 options.fallback_discount};
    }
    auto discount = [&](std::size_t n, std::uint64_t c) {
        return c == 0 ? 0.0 : disc[n][std::min<std::uint64_t>(c, 3) - 1];
    };

    // context statistics per order (index n-1 holds contexts of n-grams)
    std::vector<std::unordered_map<std::vector<WordId>, detail::ContextStats, detail::PackedHash>>
        contexts(order);
    for (std::size_t n = 0; n < order; ++n) {
        for (const auto& [g, c] : adj[n]) {
            if (n == 0 && g.front() == NgramLm::kBosId) continue;
            auto& st = contexts[n][std::vector<WordId>(g.begin(), g.end() - 1)];
            st.total += c;
            ++st.kinds[std::min<std::uint64_t>(c, 3) - 1];
        }
    }
    auto gamma = [&](std::size_t n, const detail::ContextStats& st) {
        double g = 0;
        for (std::size_t k = 0; k < 3; ++k) g += disc[n][k] * double(st.kinds[k]);
        return g / double(st.total);
    };

    // probabilities, lowest order first; the lower-order value of every
    // observed n-gram is already stored when it is needed
    const double vocab_size = double(lm.vocab().size() - 1); // minus <s>
    std::vector<std::unordered_map<std::vector<WordId>, double, detail::PackedHash>> prob(order);
    for (std::size_t n = 0; n < order; ++n) {
        std::vector<std::vector<WordId>> grams;
        for (const auto& [g, c] : adj[n]) grams.push_back(g);
        if (n == 0) {
            for (WordId w = 0; w < lm.vocab().size(); ++w)
                if (w != NgramLm::kBosId && !adj[0].contains({w})) grams.push_back({w});
        }
        for (const auto& g : grams) {
            if (n == 0 && g.front() == NgramLm::kBosId) continue;
            const auto cit = adj[n].find(g);
            const std::uint64_t c = cit == adj[n].end() ? 0 : cit->second;
            const auto& st = contexts[n].at(std::vector<WordId>(g.begin(), g.end() - 1));
            const double lower = n == 0 ? 1.0 / vocab_size
                                        : prob[n - 1].at(std::vector<WordId>(g.begin() + 1, g.end()));
            prob[n][g] = (double(c) - discount(n, c)) / double(st.total) + gamma(n, st) * lower;
        }
    }

    for (std::size_t n = 0; n < order; ++n) {
        for (const auto& [g, p] : prob[n]) lm.set_entry(g, {std::log10(p), 0.0});
        if (n == 0) lm.set_entry(std::vector<WordId>{NgramLm::kBosId}, {-99.0, 0.0});
    }
    // backoff weight of a context = its interpolation mass
    for (std::size_t n = 1; n < order; ++n) {
        for (const auto& [h, st] : contexts[n]) {
            auto e = *lm.find_entry(h);
            e.log10_backoff = std::log10(gamma(n, st));
            lm.set_entry(h, e);
        }
    }
    return lm;
}

} // namespace histmod::smt
