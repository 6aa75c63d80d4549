#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "histmod/corpus.hpp"
#include "histmod/error.hpp"
#include "histmod/util.hpp"
#include "histmod/smt/alignment.hpp"
#include "histmod/smt/decoder.hpp"
#include "histmod/smt/language_model.hpp"
#include "histmod/smt/phrase_table.hpp"

namespace histmod::smt {

struct SmtTrainOptions {
    Ibm1Options alignment;
    std::size_t max_phrase_len = 7;
    LmOptions lm;
    std::size_t beam_size = 6;
    int distortion_limit = 6;

    nlohmann::json to_json() const {
        return {{"ibm_iterations", alignment.iterations},
                {"ibm_epsilon", alignment.epsilon},
                {"max_phrase_len", max_phrase_len},
                {"lm_order", lm.order},
                {"lm_unk_threshold", lm.unk_threshold},
                {"beam_size", beam_size},
                {"distortion_limit", distortion_limit}};
    }

    static SmtTrainOptions from_json(const nlohmann::json& j) {
        SmtTrainOptions o;
        o.alignment.iterations = j.value("ibm_iterations", o.alignment.iterations);
        o.alignment.epsilon = j.value("ibm_epsilon", o.alignment.epsilon);
        o.max_phrase_len = j.value("max_phrase_len", o.max_phrase_len);
        o.lm.order = j.value("lm_order", o.lm.order);
        o.lm.unk_threshold = j.value("lm_unk_threshold", o.lm.unk_threshold);
        o.beam_size = j.value("beam_size", o.beam_size);
        o.distortion_limit = j.value("distortion_limit", o.distortion_limit);
        o.validate();
        return o;
    }

    void validate() const {
        if (alignment.iterations < 1) throw InputError("smt", "ibm_iterations must be >= 1");
        if (max_phrase_len < 1) throw InputError("smt", "max_phrase_len must be >= 1");
        if (lm.order < 1) throw InputError("smt", "lm_order must be >= 1");
        if (beam_size < 1) throw InputError("smt", "beam_size must be >= 1");
    }
};

/// Alignment in both directions, phrase extraction, and an LM over the
/// target side plus any extra target-language text.
inline TranslationModel train_smt(const ParallelCorpus& corpus, const SmtTrainOptions& options = {},
                                  const std::vector<Tokens>& extra_lm_text = {}) {
    options.validate();
    corpus.check_aligned();
    if (corpus.size() == 0) throw TrainingError("smt", "training corpus is empty");
    TranslationModel m;
    m.lexical_forward = train_ibm1(corpus, options.alignment);
    m.lexical_backward = train_ibm1(corpus.swapped(), options.alignment);
    m.phrases = extract_phrases(corpus, m.lexical_forward, m.lexical_backward, options.max_phrase_len);
    auto lm_text = token_lists(corpus.target);
    lm_text.insert(lm_text.end(), extra_lm_text.begin(), extra_lm_text.end());
    m.lm = train_lm(lm_text, options.lm);
    m.beam_size = options.beam_size;
    m.distortion_limit = options.distortion_limit;
    return m;
}

namespace model_files {
inline constexpr const char* kPhraseTable = "phrase-table.txt";
inline constexpr const char* kLm = "lm.arpa";
inline constexpr const char* kWeights = "weights.txt";
inline constexpr const char* kLexForward = "lex.fwd";
inline constexpr const char* kLexBackward = "lex.bwd";
inline constexpr const char* kConfig = "model.json";
} // namespace model_files

inline void save_model(const TranslationModel& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / model_files::kPhraseTable, m.phrases.serialize());
    write_file(dir / model_files::kLm, m.lm.to_arpa());
    write_file(dir / model_files::kWeights, m.weights.serialize());
    write_file(dir / model_files::kLexForward, m.lexical_forward.serialize());
    write_file(dir / model_files::kLexBackward, m.lexical_backward.serialize());
    const nlohmann::json cfg{{"beam_size", m.beam_size},
                             {"distortion_limit", m.distortion_limit},
                             {"max_phrase_len", m.phrases.max_phrase_len()},
                             {"lm_order", m.lm.order()}};
    write_file(dir / model_files::kConfig, cfg.dump(2) + "\n");
}

inline TranslationModel load_model(const std::filesystem::path& dir) {
    for (const char* f : {model_files::kPhraseTable, model_files::kLm, model_files::kWeights, model_files::kConfig})
        if (!std::filesystem::exists(dir / f))
            throw NotFoundError("smt", "model file missing: " + (dir / f).string());
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(read_file(dir / model_files::kConfig));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("smt", std::string("malformed model config: ") + e.what());
    }
    TranslationModel m;
    m.beam_size = cfg.value("beam_size", std::size_t{6});
    m.distortion_limit = cfg.value("distortion_limit", 6);
    if (m.beam_size < 1) throw InputError("smt", "beam_size must be >= 1");
    m.phrases = PhraseTable::parse(read_file(dir / model_files::kPhraseTable), cfg.value("max_phrase_len", std::size_t{7}));
    m.lm = NgramLm::from_arpa(read_file(dir / model_files::kLm));
    m.weights = LogLinearWeights::parse(read_file(dir / model_files::kWeights));
    if (std::filesystem::exists(dir / model_files::kLexForward))
        m.lexical_forward = LexicalTable::parse(read_file(dir / model_files::kLexForward));
    if (std::filesystem::exists(dir / model_files::kLexBackward))
        m.lexical_backward = LexicalTable::parse(read_file(dir / model_files::kLexBackward));
    return m;
}

} // namespace histmod::smt
