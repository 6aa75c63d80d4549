#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "histmod/backtranslation.hpp"
#include "histmod/corpus.hpp"
#include "histmod/error.hpp"
#include "histmod/evaluation.hpp"
#include "histmod/hashing.hpp"
#include "histmod/parallel.hpp"
#include "histmod/selection.hpp"
#include "histmod/smt/mert.hpp"
#include "histmod/smt/model_io.hpp"
#include "histmod/util.hpp"

namespace histmod {

struct CorpusPaths {
    std::string source;
    std::string target;
};

/// Pipeline configuration, read from one JSON document. Relative paths are
/// resolved against the directory holding the document.
struct PipelineConfig {
    std::filesystem::path base_dir = ".";
    CorpusPaths train;
    std::optional<CorpusPaths> dev;
    CorpusPaths test;
    std::string pool;
    std::string output_dir;
    std::uint64_t seed = 0;
    TokenizerMode tokenizer = TokenizerMode::whitespace;
    FdaConfig selection;
    smt::SmtTrainOptions smt;
    bool tune = true;
    smt::MertOptions mert;
    std::size_t dev_size = 100; // held out of the real pairs when no dev set is named
    EnrichMode enrich = EnrichMode::concat;
    std::size_t repetitions = kDefaultRepetitions;
    std::optional<std::string> external_reverse; // shell command replacing the reverse SMT system

    std::filesystem::path resolve(const std::string& p) const {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : (base_dir / path).lexically_normal();
    }
    std::filesystem::path out() const { return resolve(output_dir); }

    static PipelineConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = ".") {
        PipelineConfig c;
        c.base_dir = std::move(base_dir);
        try {
            auto paths = [](const nlohmann::json& p) {
                return CorpusPaths{p.at("source").get<std::string>(), p.at("target").get<std::string>()};
            };
            c.train = paths(j.at("train"));
            c.test = paths(j.at("test"));
            if (j.contains("dev")) c.dev = paths(j["dev"]);
            c.pool = j.at("pool").get<std::string>();
            c.output_dir = j.at("output_dir").get<std::string>();
            c.seed = j.value("seed", std::uint64_t{0});
            c.tokenizer = parse_tokenizer_mode(j.value("tokenizer", std::string("whitespace")));
            const auto sel = j.value("selection", nlohmann::json::object());
            c.selection.budget = sel.at("budget").get<std::size_t>();
            c.selection.max_ngram_order = sel.value("order", c.selection.max_ngram_order);
            c.selection.decay_factor = sel.value("decay", c.selection.decay_factor);
            c.selection.length_normalize = sel.value("length_normalize", c.selection.length_normalize);
            c.smt = smt::SmtTrainOptions::from_json(j.value("smt", nlohmann::json::object()));
            const auto tuning = j.value("tuning", nlohmann::json::object());
            c.tune = tuning.value("enabled", c.tune);
            c.mert.nbest_size = tuning.value("nbest", c.mert.nbest_size);
            c.mert.restarts = tuning.value("restarts", c.mert.restarts);
            c.mert.max_iterations = tuning.value("max_iterations", c.mert.max_iterations);
            c.dev_size = tuning.value("dev_size", c.dev_size);
            c.enrich = parse_enrich_mode(j.value("enrich_mode", std::string("concat")));
            c.repetitions = j.value("significance", nlohmann::json::object()).value("repetitions", c.repetitions);
            if (j.contains("external_reverse")) c.external_reverse = j["external_reverse"].get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw InputError("pipeline", std::string("invalid pipeline config: ") + e.what());
        }
        c.selection.validate();
        if (c.selection.budget < 1) throw InputError("pipeline", "selection budget must be >= 1");
        if (c.repetitions < 1) throw InputError("pipeline", "significance repetitions must be >= 1");
        c.mert.seed = c.seed;
        return c;
    }

    static PipelineConfig load(const std::filesystem::path& path) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError("pipeline", "cannot parse " + path.string() + ": " + e.what());
        }
        return from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
    }
};

struct StageOutcome {
    std::string stage;
    bool ran = false;
};

struct PipelineResult {
    std::vector<StageOutcome> stages;
    EvaluationReport report;

    std::size_t ran_count() const {
        std::size_t n = 0;
        for (const auto& s : stages) n += s.ran;
        return n;
    }
};

inline const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> names{"select",  "train_reverse",  "synthesize",
                                                "enrich",  "train_forward",  "evaluate"};
    return names;
}

/// Runs the six stages in order. A stage is skipped when its manifest
/// records the same input hashes, stage parameters and seed, and every
/// recorded output is present with the recorded hash. A stage that runs
/// forces every stage depending on it to run as well.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config) : cfg_(std::move(config)), out_(cfg_.out()) {}

    PipelineResult run() {
        std::filesystem::create_directories(out_ / "manifests");
        const std::map<std::string, std::vector<std::string>> deps{
            {"select", {}},
            {"train_reverse", {}},
            {"synthesize", {"select", "train_reverse"}},
            {"enrich", {"synthesize"}},
            {"train_forward", {"enrich"}},
            {"evaluate", {"train_forward"}},
        };
        PipelineResult result;
        std::set<std::string> ran;
        for (const auto& name : pipeline_stages()) {
            bool forced = false;
            for (const auto& d : deps.at(name)) forced |= ran.count(d) > 0;
            bool did_run = false;
            try {
                did_run = run_stage(name, forced);
            } catch (const Error& e) {
                throw StageError("pipeline", "stage " + name + " failed: " + e.module() + ": " + e.what());
            } catch (const std::exception& e) {
                throw StageError("pipeline", "stage " + name + " failed: " + e.what());
            }
            if (did_run) ran.insert(name);
            result.stages.push_back({name, did_run});
        }
        result.report = report_from_json(nlohmann::json::parse(read_file(out_ / "report.json")));
        return result;
    }

    std::filesystem::path manifest_path(const std::string& stage) const {
        return out_ / "manifests" / (stage + ".json");
    }

private:
    using Files = std::vector<std::string>; // names relative to the output directory

    PipelineConfig cfg_;
    std::filesystem::path out_;

    std::map<std::string, std::string> stage_inputs(const std::string& stage) const {
        std::map<std::string, std::string> in;
        auto external = [&](const std::string& p) { in[p] = sha256_file(cfg_.resolve(p)); };
        auto internal = [&](const std::string& p) { in[p] = sha256_file(out_ / p); };
        auto internal_dir = [&](const std::string& d) {
            for (const auto& f : list_files(d)) internal(f);
        };
        nlohmann::json params{{"tokenizer", cfg_.tokenizer == TokenizerMode::whitespace ? "whitespace" : "punct-split"}};
        if (stage == "select") {
            external(cfg_.pool);
            external(cfg_.train.target);
            params["selection"] = {{"budget", cfg_.selection.budget},
                                   {"order", cfg_.selection.max_ngram_order},
                                   {"decay", cfg_.selection.decay_factor},
                                   {"length_normalize", cfg_.selection.length_normalize}};
        } else if (stage == "train_reverse") {
            external(cfg_.train.source);
            external(cfg_.train.target);
            params["smt"] = cfg_.smt.to_json();
        } else if (stage == "synthesize") {
            internal("selected.txt");
            internal_dir("reverse");
            if (cfg_.external_reverse) params["external_reverse"] = *cfg_.external_reverse;
        } else if (stage == "enrich") {
            external(cfg_.train.source);
            external(cfg_.train.target);
            internal("synthetic.src");
            internal("synthetic.tgt");
            params["mode"] = enrich_mode_name(cfg_.enrich);
            params["tune"] = cfg_.tune;
            if (cfg_.dev) {
                external(cfg_.dev->source);
                external(cfg_.dev->target);
            } else {
                params["dev_size"] = cfg_.dev_size;
            }
        } else if (stage == "train_forward") {
            internal_dir("enrich");
            params["smt"] = cfg_.smt.to_json();
            params["tuning"] = {{"enabled", cfg_.tune},
                                {"nbest", cfg_.mert.nbest_size},
                                {"restarts", cfg_.mert.restarts},
                                {"max_iterations", cfg_.mert.max_iterations}};
        } else if (stage == "evaluate") {
            internal_dir("forward");
            external(cfg_.test.source);
            external(cfg_.test.target);
            params["repetitions"] = cfg_.repetitions;
        }
        in["params:" + stage] = sha256_hex(params.dump());
        return in;
    }

    Files list_files(const std::string& dir) const {
        Files files;
        if (!std::filesystem::exists(out_ / dir)) return files;
        for (const auto& e : std::filesystem::directory_iterator(out_ / dir))
            if (e.is_regular_file()) files.push_back(dir + "/" + e.path().filename().string());
        std::sort(files.begin(), files.end());
        return files;
    }

    bool up_to_date(const std::string& stage, const std::map<std::string, std::string>& inputs) const {
        const auto path = manifest_path(stage);
        if (!std::filesystem::exists(path)) return false;
        nlohmann::json m;
        try {
            m = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception&) {
            return false;
        }
        if (m.value("stage", std::string()) != stage || m.value("seed", std::uint64_t{0}) != cfg_.seed) return false;
        if (m.value("inputs", nlohmann::json::object()) != nlohmann::json(inputs)) return false;
        const auto outputs = m.value("outputs", nlohmann::json::object());
        for (const auto& [file, hash] : outputs.items()) {
            if (!std::filesystem::exists(out_ / file) || sha256_file(out_ / file) != hash.get<std::string>())
                return false;
        }
        return true;
    }

    bool run_stage(const std::string& stage, bool forced) {
        const auto inputs = stage_inputs(stage);
        if (!forced && up_to_date(stage, inputs)) {
            warn("pipeline: " + stage + " up to date, skipped");
            return false;
        }
        warn("pipeline: running " + stage);
        std::filesystem::remove(manifest_path(stage));
        Files outputs;
        if (stage == "select") outputs = do_select();
        else if (stage == "train_reverse") outputs = do_train_reverse();
        else if (stage == "synthesize") outputs = do_synthesize();
        else if (stage == "enrich") outputs = do_enrich();
        else if (stage == "train_forward") outputs = do_train_forward();
        else if (stage == "evaluate") outputs = do_evaluate();
        nlohmann::json out_hashes = nlohmann::json::object();
        for (const auto& f : outputs) out_hashes[f] = sha256_file(out_ / f);
        const nlohmann::json manifest{{"stage", stage}, {"inputs", inputs}, {"outputs", out_hashes}, {"seed", cfg_.seed}};
        write_file(manifest_path(stage), manifest.dump(2) + "\n");
        return true;
    }

    ParallelCorpus load_train() const {
        return load_parallel(cfg_.resolve(cfg_.train.source), cfg_.resolve(cfg_.train.target), cfg_.tokenizer);
    }

    static void write_side(const std::filesystem::path& path, const Sentences& side) {
        std::vector<std::string> lines;
        lines.reserve(side.size());
        for (const auto& s : side) lines.push_back(s.text);
        write_lines(path, lines);
    }

    Files do_select() {
        const auto pool = load_monolingual(cfg_.resolve(cfg_.pool), cfg_.tokenizer);
        const auto seed = token_lists(load_sentences(cfg_.resolve(cfg_.train.target), cfg_.tokenizer));
        const auto picks = fda_select(token_lists(pool.sentences), seed, cfg_.selection);
        std::vector<std::string> selected, tsv;
        for (const auto& p : picks) {
            selected.push_back(pool.sentences[p.index].text);
            tsv.push_back(std::to_string(p.index) + '\t' + format_double(p.score));
        }
        write_lines(out_ / "selected.txt", selected);
        write_lines(out_ / "selection.tsv", tsv);
        return {"selected.txt", "selection.tsv"};
    }

    Files do_train_reverse() {
        const auto train = load_train();
        std::filesystem::remove_all(out_ / "reverse");
        smt::save_model(smt::train_smt(train.swapped(), cfg_.smt), out_ / "reverse");
        return list_files("reverse");
    }

    Files do_synthesize() {
        const auto mono = load_monolingual(out_ / "selected.txt", cfg_.tokenizer);
        std::unique_ptr<Translator> reverse;
        if (cfg_.external_reverse) reverse = std::make_unique<ExternalTranslator>(*cfg_.external_reverse);
        else reverse = std::make_unique<SmtTranslator>(smt::load_model(out_ / "reverse"), "smt:reverse");
        nlohmann::json sel{{"budget", cfg_.selection.budget},
                           {"order", cfg_.selection.max_ngram_order},
                           {"decay", cfg_.selection.decay_factor},
                           {"length_normalize", cfg_.selection.length_normalize}};
        const auto synthetic = build_synthetic(mono, *reverse, sel);
        write_side(out_ / "synthetic.src", synthetic.pairs.source);
        write_side(out_ / "synthetic.tgt", synthetic.pairs.target);
        // provenance carries a wall-clock timestamp, so it is not a hashed output
        write_file(out_ / "synthetic.provenance.json", synthetic.provenance.to_json().dump(2) + "\n");
        return {"synthetic.src", "synthetic.tgt"};
    }

    Files do_enrich() {
        auto real = load_train();
        std::filesystem::remove_all(out_ / "enrich");
        std::filesystem::create_directories(out_ / "enrich");
        if (cfg_.tune) {
            ParallelCorpus dev;
            if (cfg_.dev) {
                dev = load_parallel(cfg_.resolve(cfg_.dev->source), cfg_.resolve(cfg_.dev->target), cfg_.tokenizer);
            } else {
                const std::size_t k = std::min(cfg_.dev_size, real.size() / 10);
                if (k == 0) throw SizeError("pipeline", "training corpus too small to hold out a tuning set");
                auto split = split_corpus(real, real.size() - k, k, 0, cfg_.seed);
                real = std::move(split.train);
                dev = std::move(split.validation);
            }
            write_side(out_ / "enrich" / "dev.src", dev.source);
            write_side(out_ / "enrich" / "dev.tgt", dev.target);
        }
        SyntheticCorpus synthetic;
        synthetic.pairs = load_parallel(out_ / "synthetic.src", out_ / "synthetic.tgt", cfg_.tokenizer);
        enrich_training(real, synthetic, cfg_.enrich).write(out_ / "enrich");
        return list_files("enrich");
    }

    Files do_train_forward() {
        const auto recipe = nlohmann::json::parse(read_file(out_ / "enrich" / "recipe.json"));
        ParallelCorpus train{"forward", {}, {}};
        for (const auto& st : recipe.at("stages")) {
            auto part = load_parallel(out_ / "enrich" / st.at("source").get<std::string>(),
                                      out_ / "enrich" / st.at("target").get<std::string>(), cfg_.tokenizer);
            train.source.insert(train.source.end(), part.source.begin(), part.source.end());
            train.target.insert(train.target.end(), part.target.begin(), part.target.end());
        }
        auto model = smt::train_smt(train, cfg_.smt);
        if (cfg_.tune) {
            const auto dev = load_parallel(out_ / "enrich" / "dev.src", out_ / "enrich" / "dev.tgt", cfg_.tokenizer);
            model.weights = smt::tune_weights(model, dev, cfg_.mert);
        }
        std::filesystem::remove_all(out_ / "forward");
        smt::save_model(model, out_ / "forward");
        return list_files("forward");
    }

    Files do_evaluate() {
        const auto model = smt::load_model(out_ / "forward");
        const auto test = load_parallel(cfg_.resolve(cfg_.test.source), cfg_.resolve(cfg_.test.target), cfg_.tokenizer);
        const auto sources = token_lists(test.source);
        std::vector<Tokens> hyps(sources.size());
        parallel_for(sources.size(), [&](std::size_t i) { hyps[i] = smt::decode(model, sources[i]).output; });
        std::vector<std::string> lines;
        for (const auto& h : hyps) lines.push_back(join(h));
        write_lines(out_ / "test.hyp", lines);

        const EvalPair system{hyps, token_lists(test.target)};
        const EvalPair baseline{sources, token_lists(test.target)};
        auto report = evaluate(system, baseline);
        report.significance = significance_test(system, baseline, Metric::bleu, cfg_.repetitions, cfg_.seed);
        write_file(out_ / "report.json", to_json(report).dump(2) + "\n");
        return {"test.hyp", "report.json"};
    }
};

inline PipelineResult run_pipeline(const PipelineConfig& config) { return Pipeline(config).run(); }

} // namespace histmod
