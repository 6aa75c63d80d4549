#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace histmod::smt {

using WordId = std::uint32_t;

class Vocab {
public:
    WordId intern(const std::string& w) {
        auto [it, fresh] = ids_.try_emplace(w, static_cast<WordId>(words_.size()));
        if (fresh) words_.push_back(w);
        return it->second;
    }

    /// Returns `fallback` for unknown words.
    WordId find(const std::string& w, WordId fallback) const {
        const auto it = ids_.find(w);
        return it == ids_.end() ? fallback : it->second;
    }

    bool contains(const std::string& w) const { return ids_.contains(w); }
    const std::string& word(WordId id) const { return words_[id]; }
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

private:
    std::unordered_map<std::string, WordId> ids_;
    std::vector<std::string> words_;
};

} // namespace histmod::smt
