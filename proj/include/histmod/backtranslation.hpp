#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"

#include "histmod/corpus.hpp"
#include "histmod/error.hpp"
#include "histmod/parallel.hpp"
#include "histmod/smt/decoder.hpp"
#include "histmod/util.hpp"

namespace histmod {

/// Sentence-level translation port. Implementations are deterministic for a
/// fixed configuration and safe to call from several threads.
class Translator {
public:
    virtual ~Translator() = default;

    virtual std::string id() const = 0;
    virtual Tokens translate(const Tokens& sentence) const = 0;

    /// Order-preserving batch translation. A failure is reported with the
    /// lowest failing 1-based line number.
    virtual std::vector<Tokens> translate_all(const std::vector<Tokens>& sentences) const {
        std::vector<Tokens> out(sentences.size());
        std::vector<std::string> errors(sentences.size());
        std::vector<std::uint8_t> failed(sentences.size());
        parallel_for(sentences.size(), [&](std::size_t i) {
            try {
                out[i] = translate(sentences[i]);
            } catch (const std::exception& e) {
                failed[i] = 1;
                errors[i] = e.what();
            }
        });
        for (std::size_t i = 0; i < failed.size(); ++i)
            if (failed[i])
                throw TranslatorError("backtranslation", "translator '" + id() + "' failed on line " +
                                                             std::to_string(i + 1) + ": " + errors[i]);
        return out;
    }
};

/// In-process phrase-based decoder.
class SmtTranslator final : public Translator {
public:
    explicit SmtTranslator(smt::TranslationModel model, std::string id = "smt")
        : model_(std::move(model)), id_(std::move(id)) {}

    std::string id() const override { return id_; }
    Tokens translate(const Tokens& sentence) const override { return smt::decode(model_, sentence).output; }
    const smt::TranslationModel& model() const { return model_; }

private:
    smt::TranslationModel model_;
    std::string id_;
};

/// Wraps a callable; mainly for tests and library embedding.
class FunctionTranslator final : public Translator {
public:
    FunctionTranslator(std::string id, std::function<Tokens(const Tokens&)> fn)
        : id_(std::move(id)), fn_(std::move(fn)) {}

    std::string id() const override { return id_; }
    Tokens translate(const Tokens& sentence) const override { return fn_(sentence); }

private:
    std::string id_;
    std::function<Tokens(const Tokens&)> fn_;
};

namespace detail {
inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

inline std::filesystem::path make_temp_dir() {
    static std::atomic<unsigned> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto dir = base / ("histmod-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        if (std::filesystem::create_directory(dir)) return dir;
    }
    throw TranslatorError("backtranslation", "cannot create a temporary directory");
}
} // namespace detail

/// External system driven through a shell command that reads one sentence
/// per line on standard input and writes one translation per line on
/// standard output.
class ExternalTranslator final : public Translator {
public:
    explicit ExternalTranslator(std::string command) : command_(std::move(command)) {}

    std::string id() const override { return "external:" + command_; }

    Tokens translate(const Tokens& sentence) const override { return translate_all({sentence}).front(); }

    std::vector<Tokens> translate_all(const std::vector<Tokens>& sentences) const override {
        const auto dir = detail::make_temp_dir();
        struct Cleanup {
            std::filesystem::path dir;
            ~Cleanup() {
                std::error_code ec;
                std::filesystem::remove_all(dir, ec);
            }
        } cleanup{dir};
        std::vector<std::string> lines;
        lines.reserve(sentences.size());
        for (const auto& s : sentences) lines.push_back(join(s));
        write_lines(dir / "input.txt", lines);
        const std::string cmd = "(" + command_ + ") < " + detail::shell_quote((dir / "input.txt").string()) +
                                " > " + detail::shell_quote((dir / "output.txt").string());
        const int status = std::system(cmd.c_str());
        if (status != 0)
            throw TranslatorError("backtranslation", "external translator exited with status " +
                                                         std::to_string(status) + ": " + command_);
        const auto out_lines = read_lines(dir / "output.txt");
        if (out_lines.size() != sentences.size())
            throw TranslatorError("backtranslation",
                                  "external translator produced no output for line " +
                                      std::to_string(std::min(out_lines.size(), sentences.size()) + 1) + " (" +
                                      std::to_string(out_lines.size()) + " != " +
                                      std::to_string(sentences.size()) + " lines)");
        std::vector<Tokens> out;
        out.reserve(out_lines.size());
        for (const auto& l : out_lines) out.push_back(split_whitespace(l));
        return out;
    }

private:
    std::string command_;
};

struct Provenance {
    nlohmann::json selection;
    std::string translator;
    std::string timestamp; // UTC, ISO 8601

    nlohmann::json to_json() const {
        return {{"selection", selection}, {"translator", translator}, {"timestamp", timestamp}};
    }
};

/// Synthetic pairs: backtranslated source, verbatim modern target.
struct SyntheticCorpus {
    ParallelCorpus pairs;
    Provenance provenance;
};

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Translates each modern sentence with the reverse (modern to historical)
/// system. Target side sentences are copied verbatim, in input order.
inline SyntheticCorpus build_synthetic(const MonolingualCorpus& monolingual, const Translator& reverse,
                                       nlohmann::json selection_config = nlohmann::json::object()) {
    SyntheticCorpus out;
    out.pairs.name = monolingual.name + ".synthetic";
    out.pairs.target = monolingual.sentences;
    const auto translated = reverse.translate_all(token_lists(monolingual.sentences));
    out.pairs.source = to_sentences(translated);
    out.provenance = {std::move(selection_config), reverse.id(), utc_timestamp()};
    return out;
}

enum class EnrichMode { concat, synthetic_then_real };

inline EnrichMode parse_enrich_mode(std::string_view s) {
    if (s == "concat") return EnrichMode::concat;
    if (s == "synthetic-then-real") return EnrichMode::synthetic_then_real;
    throw InputError("backtranslation", "unknown enrichment mode '" + std::string(s) + "'");
}

inline std::string_view enrich_mode_name(EnrichMode m) {
    return m == EnrichMode::concat ? "concat" : "synthetic-then-real";
}

struct RecipeStage {
    std::string name;
    ParallelCorpus corpus;
};

/// Ordered training stages. `concat` has one stage holding real pairs
/// followed by synthetic pairs; `synthetic-then-real` has the synthetic
/// stage first and the real stage second.
struct TrainingRecipe {
    EnrichMode mode = EnrichMode::concat;
    std::vector<RecipeStage> stages;

    /// All stages concatenated in stage order.
    ParallelCorpus merged() const {
        ParallelCorpus out{"merged", {}, {}};
        for (const auto& st : stages) {
            out.source.insert(out.source.end(), st.corpus.source.begin(), st.corpus.source.end());
            out.target.insert(out.target.end(), st.corpus.target.begin(), st.corpus.target.end());
        }
        return out;
    }

    /// Writes `<stage>.src` / `<stage>.tgt` per stage and recipe.json.
    nlohmann::json write(const std::filesystem::path& dir) const {
        nlohmann::json stages_json = nlohmann::json::array();
        for (const auto& st : stages) {
            std::vector<std::string> src, tgt;
            for (const auto& s : st.corpus.source) src.push_back(s.text);
            for (const auto& s : st.corpus.target) tgt.push_back(s.text);
            write_lines(dir / (st.name + ".src"), src);
            write_lines(dir / (st.name + ".tgt"), tgt);
            stages_json.push_back(
                {{"name", st.name}, {"source", st.name + ".src"}, {"target", st.name + ".tgt"}, {"pairs", st.corpus.size()}});
        }
        nlohmann::json j{{"mode", enrich_mode_name(mode)}, {"stages", stages_json}};
        write_file(dir / "recipe.json", j.dump(2) + "\n");
        return j;
    }
};

inline TrainingRecipe enrich_training(const ParallelCorpus& real, const SyntheticCorpus& synthetic, EnrichMode mode) {
    real.check_aligned();
    synthetic.pairs.check_aligned();
    if (real.size() == 0 || synthetic.pairs.size() == 0)
        throw InputError("backtranslation", "enrichment needs non-empty real and synthetic corpora");
    TrainingRecipe r;
    r.mode = mode;
    if (mode == EnrichMode::concat) {
        ParallelCorpus merged{real.name + "+synthetic", real.source, real.target};
        merged.source.insert(merged.source.end(), synthetic.pairs.source.begin(), synthetic.pairs.source.end());
        merged.target.insert(merged.target.end(), synthetic.pairs.target.begin(), synthetic.pairs.target.end());
        r.stages.push_back({"enriched", std::move(merged)});
    } else {
        r.stages.push_back({"synthetic", synthetic.pairs});
        r.stages.push_back({"real", real});
    }
    return r;
}

} // namespace histmod
