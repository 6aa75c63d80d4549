#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace histmod::testing {

/// Synthetic modernization task: pseudo-words drawn from a Zipf
/// distribution, with a deterministic spelling ruleset producing the
/// historical side. Generation uses only raw engine output, so the data is
/// identical across standard library implementations.
class ToyTask {
public:
    struct Sizes {
        std::size_t vocabulary = 300;
        std::size_t train = 1000;
        std::size_t test = 100;
        std::size_t pool = 8000;
        std::size_t min_len = 3;
        std::size_t max_len = 10;
    };

    explicit ToyTask(std::uint64_t seed = 1) : ToyTask(seed, Sizes{}) {}
    ToyTask(std::uint64_t seed, Sizes sizes) : rng_(seed), sizes_(sizes) {
        build_vocabulary();
        for (std::size_t i = 0; i < sizes_.train; ++i) add_pair(train_src, train_tgt);
        for (std::size_t i = 0; i < sizes_.test; ++i) add_pair(test_src, test_tgt);
        for (std::size_t i = 0; i < sizes_.pool; ++i) pool.push_back(sentence());
    }

    static std::string historical(const std::string& w) {
        std::string h;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const char c = w[i];
            const char next = i + 1 < w.size() ? w[i + 1] : '\0';
            if (i == 0 && c == 'u') h += 'v';
            else if (i + 1 == w.size() && c == 'i') h += 'y';
            else if (c == 'c' && (next == 'a' || next == 'o' || next == 'u')) h += 'k';
            else if (c == 'i' && i > 0 && is_vowel(next)) h += 'j';
            else h += c;
        }
        if (w.size() >= 5 && !is_vowel(w.back())) h += 'e';
        return h;
    }

    static std::string historical_sentence(const std::string& s) {
        std::string out, word;
        auto flush = [&] {
            if (word.empty()) return;
            if (!out.empty()) out += ' ';
            out += historical(word);
            word.clear();
        };
        for (char c : s) {
            if (c == ' ') flush();
            else word += c;
        }
        flush();
        return out;
    }

    /// Fraction of training tokens whose historical spelling differs.
    double changed_fraction() const {
        std::size_t changed = 0, total = 0;
        for (const auto& s : train_tgt) {
            std::size_t start = 0;
            while (start < s.size()) {
                auto end = s.find(' ', start);
                if (end == std::string::npos) end = s.size();
                const auto w = s.substr(start, end - start);
                changed += historical(w) != w;
                ++total;
                start = end + 1;
            }
        }
        return total ? double(changed) / double(total) : 0.0;
    }

    struct Files {
        std::filesystem::path train_src, train_tgt, test_src, test_tgt, pool, config;
    };

    /// Writes the corpora and a pipeline config into `dir`.
    Files write(const std::filesystem::path& dir, nlohmann::json config_overrides = nlohmann::json::object()) const {
        std::filesystem::create_directories(dir);
        auto dump = [&](const char* name, const std::vector<std::string>& lines) {
            std::ofstream f(dir / name, std::ios::binary);
            for (const auto& l : lines) f << l << '\n';
            return dir / name;
        };
        Files files{dump("train.hist", train_src), dump("train.mod", train_tgt), dump("test.hist", test_src),
                    dump("test.mod", test_tgt),    dump("pool.mod", pool),       dir / "pipeline.json"};
        nlohmann::json cfg{
            {"train", {{"source", "train.hist"}, {"target", "train.mod"}}},
            {"test", {{"source", "test.hist"}, {"target", "test.mod"}}},
            {"pool", "pool.mod"},
            {"output_dir", "out"},
            {"seed", 7},
            {"selection", {{"budget", 5000}}},
            {"significance", {{"repetitions", 1000}}},
        };
        cfg.merge_patch(config_overrides);
        std::ofstream(files.config) << cfg.dump(2) << '\n';
        return files;
    }

    std::vector<std::string> train_src, train_tgt, test_src, test_tgt, pool;
    std::vector<std::string> vocabulary;

private:
    static bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

    std::uint64_t below(std::uint64_t n) { return rng_() % n; }
    double unit() { return double(rng_() >> 11) * 0x1.0p-53; }

    void build_vocabulary() {
        static const std::string consonants = "bcdfgklmnprstvz", vowels = "aeiou";
        std::set<std::string> seen;
        while (vocabulary.size() < sizes_.vocabulary) {
            std::string w;
            if (below(5) == 0) w += vowels[below(vowels.size())];
            for (auto n = 1 + below(3); n > 0; --n) {
                w += consonants[below(consonants.size())];
                w += vowels[below(vowels.size())];
            }
            if (below(5) < 2) w += consonants[below(consonants.size())];
            if (seen.insert(w).second) vocabulary.push_back(w);
        }
        double z = 0;
        for (std::size_t r = 0; r < vocabulary.size(); ++r) cumulative_.push_back(z += 1.0 / double(r + 1));
        for (double& c : cumulative_) c /= z;
    }

    std::string sentence() {
        std::string s;
        for (auto n = sizes_.min_len + below(sizes_.max_len - sizes_.min_len + 1); n > 0; --n) {
            const double u = unit();
            const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
            const auto r = std::min<std::size_t>(std::size_t(it - cumulative_.begin()), vocabulary.size() - 1);
            if (!s.empty()) s += ' ';
            s += vocabulary[r];
        }
        return s;
    }

    void add_pair(std::vector<std::string>& src, std::vector<std::string>& tgt) {
        const auto modern = sentence();
        src.push_back(historical_sentence(modern));
        tgt.push_back(modern);
    }

    std::mt19937_64 rng_;
    Sizes sizes_;
    std::vector<double> cumulative_;
};

} // namespace histmod::testing
