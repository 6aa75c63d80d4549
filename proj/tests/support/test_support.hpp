#pragma once

#include <atomic>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "histmod/util.hpp"

namespace histmod::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("histmod-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Tokens toks(const std::string& s) { return split_whitespace(s); }

inline std::vector<Tokens> toks_list(const std::vector<std::string>& lines) {
    std::vector<Tokens> out;
    for (const auto& l : lines) out.push_back(toks(l));
    return out;
}

// ---------------------------------------------------------------------------
// Reference TER: breadth-first search over every block-shift sequence,
// minimising shifts plus Levenshtein distance. Exponential; tiny inputs only.

inline int levenshtein(const Tokens& a, const Tokens& b) {
    std::vector<int> d(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) d[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        int prev = d[0];
        d[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const int cur = std::min({d[j] + 1, d[j - 1] + 1, prev + (a[i - 1] != b[j - 1])});
            prev = d[j];
            d[j] = cur;
        }
    }
    return d[b.size()];
}

inline int exhaustive_ter_edits(const Tokens& hyp, const Tokens& ref) {
    int best = levenshtein(hyp, ref);
    std::map<Tokens, int> seen{{hyp, 0}};
    std::deque<Tokens> queue{hyp};
    while (!queue.empty()) {
        Tokens s = queue.front();
        queue.pop_front();
        const int k = seen[s];
        if (k + 1 >= best) continue;
        const std::size_t n = s.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t len = 1; i + len <= n; ++len) {
                Tokens block(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + len));
                Tokens rest(s.begin(), s.begin() + static_cast<long>(i));
                rest.insert(rest.end(), s.begin() + static_cast<long>(i + len), s.end());
                for (std::size_t j = 0; j <= rest.size(); ++j) {
                    if (j == i) continue;
                    Tokens t(rest.begin(), rest.begin() + static_cast<long>(j));
                    t.insert(t.end(), block.begin(), block.end());
                    t.insert(t.end(), rest.begin() + static_cast<long>(j), rest.end());
                    if (seen.count(t)) continue;
                    seen[t] = k + 1;
                    best = std::min(best, k + 1 + levenshtein(t, ref));
                    queue.push_back(std::move(t));
                }
            }
        }
    }
    return best;
}

} // namespace histmod::testing
