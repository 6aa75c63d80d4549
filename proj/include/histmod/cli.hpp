#pragma once

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "histmod/backtranslation.hpp"
#include "histmod/corpus.hpp"
#include "histmod/error.hpp"
#include "histmod/evaluation.hpp"
#include "histmod/parallel.hpp"
#include "histmod/pipeline.hpp"
#include "histmod/selection.hpp"
#include "histmod/smt/mert.hpp"
#include "histmod/smt/model_io.hpp"
#include "histmod/study.hpp"
#include "histmod/study_server.hpp"
#include "histmod/subword.hpp"
#include "histmod/util.hpp"

namespace histmod::cli {

enum ExitStatus : int { kSuccess = 0, kFailure = 1, kUsage = 2 };

namespace detail {

inline std::vector<std::string> input_lines(const std::string& path) {
    if (!path.empty() && path != "-") {
        auto lines = read_lines(path);
        for (std::size_t i = 0; i < lines.size(); ++i)
            if (!utf8_valid(lines[i])) throw DecodeError("corpus", path + ":" + std::to_string(i + 1) + ": invalid UTF-8");
        return lines;
    }
    std::vector<std::string> lines;
    for (std::string l; std::getline(std::cin, l);) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
        lines.push_back(std::move(l));
    }
    return lines;
}

inline std::vector<Tokens> input_tokens(const std::string& path, TokenizerMode mode) {
    std::vector<Tokens> out;
    for (const auto& l : input_lines(path)) out.push_back(tokenize(l, mode));
    return out;
}

inline std::string metric_value(double v) {
    // one decimal, as reported in tables
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(1);
    s << v;
    return s.str();
}

struct Options {
    // global
    std::size_t threads = 0;
    std::uint64_t seed = 0;
    std::string tokenizer = "whitespace";
    std::string format = "json";
    // shared
    std::string source, target, input, output, model, config, log;
    std::size_t merges = kDefaultMergeCount;
    std::string marker = std::string(kDefaultMarker);
    std::vector<std::string> inputs;
    // select
    std::string pool, seed_file;
    std::size_t budget = 0;
    int order = 3;
    double decay = 0.5;
    bool no_length_norm = false;
    // smt
    std::string dev_source, dev_target;
    smt::SmtTrainOptions smt;
    smt::MertOptions mert;
    std::size_t nbest = 0;
    // backtranslate
    std::string external, output_source, output_target;
    // evaluate
    std::string hyp, ref, baseline, significance, metric = "bleu", ter_norm = "reference";
    std::string a, b;
    std::size_t reps = kDefaultRepetitions;
    // study
    std::string host = "127.0.0.1", spec, study_id, static_dir;
    int port = 8080;
};

} // namespace detail

/// Entry point behind the `histmod` executable. Results go to `out`,
/// diagnostics to `err`. Returns 0 on success, 1 on a runtime failure and
/// 2 on a usage error.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    using detail::Options;
    Options o;
    CLI::App app{"Historical text modernization workbench", "histmod"};
    app.require_subcommand(1);
    app.add_option("--threads", o.threads, "Worker threads (default: HISTMOD_THREADS or all cores)");
    app.add_option("--seed", o.seed, "Seed for every randomized step");
    app.add_option("--tokenizer", o.tokenizer, "whitespace or punct-split")
        ->check(CLI::IsMember({"whitespace", "punct-split"}));

    auto* stats = app.add_subcommand("stats", "Sentence, token and vocabulary counts");
    stats->add_option("--source", o.source, "Corpus file (source side)")->required()->check(CLI::ExistingFile);
    stats->add_option("--target", o.target, "Target side of a parallel corpus")->check(CLI::ExistingFile);
    stats->add_option("--format", o.format)->check(CLI::IsMember({"json", "tsv"}));

    auto* learn = app.add_subcommand("bpe-learn", "Learn a joint BPE model from one or more files");
    learn->add_option("--input", o.inputs, "Training files (pooled)")->required()->check(CLI::ExistingFile);
    learn->add_option("--merges", o.merges, "Merge operations")->check(CLI::PositiveNumber);
    learn->add_option("--marker", o.marker, "Continuation marker");
    learn->add_option("--output", o.output, "Model file")->required();

    auto* apply = app.add_subcommand("bpe-apply", "Segment text with a BPE model");
    apply->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
    apply->add_option("--input", o.input, "Input file (default: standard input)");

    auto* revert = app.add_subcommand("bpe-revert", "Join BPE subwords back into words");
    revert->add_option("--input", o.input, "Input file (default: standard input)");
    revert->add_option("--marker", o.marker);

    auto* select = app.add_subcommand("select", "Feature decay data selection");
    select->add_option("--pool", o.pool)->required()->check(CLI::ExistingFile);
    select->add_option("--seed", o.seed_file, "Seed corpus file")->required()->check(CLI::ExistingFile);
    select->add_option("--budget", o.budget)->required();
    select->add_option("--order", o.order)->check(CLI::PositiveNumber);
    select->add_option("--decay", o.decay);
    select->add_flag("--no-length-norm", o.no_length_norm);

    auto* train = app.add_subcommand("train-smt", "Train a phrase-based model");
    train->add_option("--source", o.source)->required()->check(CLI::ExistingFile);
    train->add_option("--target", o.target)->required()->check(CLI::ExistingFile);
    train->add_option("--output", o.output, "Model directory")->required();
    train->add_option("--dev-source", o.dev_source, "Tuning set source side")->check(CLI::ExistingFile);
    train->add_option("--dev-target", o.dev_target, "Tuning set target side")->check(CLI::ExistingFile);
    train->add_option("--ibm-iterations", o.smt.alignment.iterations)->check(CLI::PositiveNumber);
    train->add_option("--max-phrase-len", o.smt.max_phrase_len)->check(CLI::PositiveNumber);
    train->add_option("--lm-order", o.smt.lm.order)->check(CLI::PositiveNumber);
    train->add_option("--beam", o.smt.beam_size)->check(CLI::PositiveNumber);
    train->add_option("--distortion", o.smt.distortion_limit);
    train->add_option("--nbest", o.mert.nbest_size)->check(CLI::PositiveNumber);
    train->add_option("--restarts", o.mert.restarts);
    train->add_option("--seed", o.seed);

    auto* translate = app.add_subcommand("translate", "Decode sentences with a trained model");
    translate->add_option("--model", o.model, "Model directory")->required()->check(CLI::ExistingDirectory);
    translate->add_option("--input", o.input, "Input file (default: standard input)");
    translate->add_option("--nbest", o.nbest, "Emit an n-best list as JSON lines");

    auto* bt = app.add_subcommand("backtranslate", "Build synthetic pairs from monolingual modern text");
    auto* bt_model = bt->add_option("--model", o.model, "Reverse model directory")->check(CLI::ExistingDirectory);
    auto* bt_ext = bt->add_option("--external", o.external, "Shell command translating stdin to stdout");
    bt_model->excludes(bt_ext);
    bt->add_option("--input", o.input, "Monolingual modern text")->required()->check(CLI::ExistingFile);
    bt->add_option("--output-source", o.output_source)->required();
    bt->add_option("--output-target", o.output_target)->required();

    auto* pipe = app.add_subcommand("pipeline", "Run the resumable synthetic-data pipeline");
    pipe->add_option("--config", o.config, "Pipeline JSON document")->required()->check(CLI::ExistingFile);

    auto* eval = app.add_subcommand("evaluate", "TER and BLEU of a system output");
    eval->add_option("--hyp", o.hyp)->required()->check(CLI::ExistingFile);
    eval->add_option("--ref", o.ref)->required()->check(CLI::ExistingFile);
    eval->add_option("--baseline", o.baseline, "Original text, scored as the copy-through baseline")
        ->check(CLI::ExistingFile);
    eval->add_option("--significance", o.significance, "Second system for an approximate randomization test")
        ->check(CLI::ExistingFile);
    eval->add_option("--reps", o.reps)->check(CLI::PositiveNumber);
    eval->add_option("--seed", o.seed);
    eval->add_option("--metric", o.metric)->check(CLI::IsMember({"bleu", "ter"}));
    eval->add_option("--ter-norm", o.ter_norm)->check(CLI::IsMember({"reference", "hypothesis"}));
    eval->add_option("--format", o.format)->check(CLI::IsMember({"json", "tsv"}));

    auto* sig = app.add_subcommand("significance", "Approximate randomization test between two systems");
    sig->add_option("--a", o.a, "System A output")->required()->check(CLI::ExistingFile);
    sig->add_option("--b", o.b, "System B output")->required()->check(CLI::ExistingFile);
    sig->add_option("--ref", o.ref)->required()->check(CLI::ExistingFile);
    sig->add_option("--metric", o.metric)->check(CLI::IsMember({"bleu", "ter"}));
    sig->add_option("--reps", o.reps)->check(CLI::PositiveNumber);
    sig->add_option("--seed", o.seed);
    sig->add_option("--format", o.format)->check(CLI::IsMember({"json", "tsv"}));

    auto* study_cmd = app.add_subcommand("study", "Human study service");
    study_cmd->require_subcommand(1);
    auto* serve = study_cmd->add_subcommand("serve", "Serve the study HTTP API");
    serve->add_option("--log", o.log, "Event log file")->required();
    serve->add_option("--port", o.port)->check(CLI::Range(0, 65535));
    serve->add_option("--host", o.host);
    serve->add_option("--static", o.static_dir, "Directory served under /")->check(CLI::ExistingDirectory);
    auto* report = study_cmd->add_subcommand("report", "Print study reports from an event log");
    report->add_option("--log", o.log)->required()->check(CLI::ExistingFile);
    report->add_option("--study", o.study_id, "Study id (default: all studies)");
    auto* create = study_cmd->add_subcommand("create", "Create a study from a JSON document");
    create->add_option("--log", o.log)->required();
    create->add_option("--spec", o.spec, "Study JSON {kind, systems, items}")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        return kUsage;
    }

    auto& sink = warning_sink();
    const auto previous_sink = sink;
    sink = [&err](std::string_view m) { err << "warning: " << m << '\n'; };
    struct Restore {
        std::function<void(std::string_view)>& sink;
        std::function<void(std::string_view)> previous;
        ~Restore() { sink = previous; }
    } restore{sink, previous_sink};

    if (o.threads > 0) set_thread_count(o.threads);
    try {
        const TokenizerMode mode = parse_tokenizer_mode(o.tokenizer);
        if (*stats) {
            auto emit_tsv = [&](const std::string& side, const CorpusStats& st) {
                out << side << '\t' << st.sentences << '\t' << st.tokens << '\t' << st.vocab << '\n';
            };
            if (o.target.empty()) {
                const auto st = corpus_stats(load_sentences(o.source, mode));
                if (o.format == "tsv") emit_tsv("corpus", st);
                else out << stats_to_json(st).dump() << '\n';
            } else {
                const auto c = load_parallel(o.source, o.target, mode);
                const auto s = corpus_stats(c.source), t = corpus_stats(c.target);
                if (o.format == "tsv") emit_tsv("source", s), emit_tsv("target", t);
                else out << nlohmann::json{{"source", stats_to_json(s)}, {"target", stats_to_json(t)}}.dump() << '\n';
            }
        } else if (*learn) {
            std::vector<std::vector<Tokens>> streams;
            for (const auto& f : o.inputs) streams.push_back(detail::input_tokens(f, mode));
            const auto model = bpe_learn(streams, o.merges, o.marker);
            bpe_save(model, o.output);
            out << nlohmann::json{{"merges", model.merges.size()}, {"output", o.output}}.dump() << '\n';
        } else if (*apply) {
            const auto model = bpe_load(o.model);
            const BpeSegmenter seg(model);
            for (const auto& s : detail::input_tokens(o.input, mode)) out << join(seg.apply(s)) << '\n';
        } else if (*revert) {
            for (const auto& s : detail::input_tokens(o.input, mode)) out << join(bpe_revert(s, o.marker)) << '\n';
        } else if (*select) {
            FdaConfig cfg;
            cfg.budget = o.budget;
            cfg.max_ngram_order = o.order;
            cfg.decay_factor = o.decay;
            cfg.length_normalize = !o.no_length_norm;
            const auto pool = load_sentences(o.pool, mode);
            const auto seed = token_lists(load_sentences(o.seed_file, mode));
            for (const auto& p : fda_select(token_lists(pool), seed, cfg))
                out << p.index << '\t' << format_double(p.score) << '\t' << pool[p.index].text << '\n';
        } else if (*train) {
            if (o.dev_source.empty() != o.dev_target.empty())
                throw InputError("cli", "--dev-source and --dev-target must be given together");
            const auto corpus = load_parallel(o.source, o.target, mode);
            auto model = smt::train_smt(corpus, o.smt);
            nlohmann::json summary{{"pairs", corpus.size()}, {"phrases", model.phrases.size()}, {"tuned", false}};
            if (!o.dev_source.empty()) {
                o.mert.seed = o.seed;
                model.weights = smt::tune_weights(model, load_parallel(o.dev_source, o.dev_target, mode), o.mert);
                summary["tuned"] = true;
            }
            smt::save_model(model, o.output);
            nlohmann::json w = nlohmann::json::object();
            for (std::size_t k = 0; k < smt::kFeatureCount; ++k)
                w[std::string(smt::kFeatureNames[k])] = model.weights.values[k];
            summary["weights"] = w;
            summary["output"] = o.output;
            out << summary.dump() << '\n';
        } else if (*translate) {
            const auto model = smt::load_model(o.model);
            const auto sentences = detail::input_tokens(o.input, mode);
            if (o.nbest > 0) {
                std::vector<std::vector<smt::DecodeResult>> lists(sentences.size());
                parallel_for(sentences.size(), [&](std::size_t i) {
                    lists[i] = smt::decode_nbest(model, sentences[i], o.nbest, smt::DecodeOptions::from(model));
                });
                for (std::size_t i = 0; i < lists.size(); ++i)
                    for (const auto& r : lists[i])
                        out << nlohmann::json{{"line", i + 1}, {"output", join(r.output)}, {"score", r.score},
                                              {"features", r.features}}.dump()
                            << '\n';
            } else {
                const SmtTranslator tr(model);
                for (const auto& h : tr.translate_all(sentences)) out << join(h) << '\n';
            }
        } else if (*bt) {
            std::unique_ptr<Translator> reverse;
            if (!o.external.empty()) reverse = std::make_unique<ExternalTranslator>(o.external);
            else if (!o.model.empty()) reverse = std::make_unique<SmtTranslator>(smt::load_model(o.model), "smt:" + o.model);
            else throw InputError("cli", "backtranslate needs --model or --external");
            const auto mono = load_monolingual(o.input, mode);
            const auto synthetic = build_synthetic(mono, *reverse);
            std::vector<std::string> src, tgt;
            for (const auto& s : synthetic.pairs.source) src.push_back(s.text);
            for (const auto& s : synthetic.pairs.target) tgt.push_back(s.text);
            write_lines(o.output_source, src);
            write_lines(o.output_target, tgt);
            out << nlohmann::json{{"pairs", synthetic.pairs.size()}, {"translator", synthetic.provenance.translator}}.dump()
                << '\n';
        } else if (*pipe) {
            auto cfg = PipelineConfig::load(o.config);
            const auto result = run_pipeline(cfg);
            nlohmann::json stages = nlohmann::json::array();
            for (const auto& s : result.stages) stages.push_back({{"stage", s.stage}, {"ran", s.ran}});
            out << nlohmann::json{{"stages", stages}, {"report", to_json(result.report)}}.dump() << '\n';
        } else if (*eval) {
            const auto refs = detail::input_tokens(o.ref, mode);
            const EvalPair system{detail::input_tokens(o.hyp, mode), refs};
            const auto norm = o.ter_norm == "reference" ? TerNormalization::reference : TerNormalization::hypothesis;
            std::optional<EvalPair> baseline;
            if (!o.baseline.empty()) baseline = EvalPair{detail::input_tokens(o.baseline, mode), refs};
            auto rep = evaluate(system, baseline, norm);
            if (!o.significance.empty()) {
                const EvalPair other{detail::input_tokens(o.significance, mode), refs};
                rep.significance = significance_test(system, other, parse_metric(o.metric), o.reps, o.seed);
            }
            if (o.format == "tsv") {
                out << "system\t" << detail::metric_value(rep.ter) << '\t' << detail::metric_value(rep.bleu) << '\n';
                if (rep.baseline)
                    out << "baseline\t" << detail::metric_value(rep.baseline->ter) << '\t'
                        << detail::metric_value(rep.baseline->bleu) << '\n';
                if (rep.significance)
                    out << "significance\t" << format_double(rep.significance->p) << '\t'
                        << (rep.significance->significant ? "yes" : "no") << '\n';
            } else {
                out << to_json(rep).dump() << '\n';
            }
        } else if (*sig) {
            const auto refs = detail::input_tokens(o.ref, mode);
            const EvalPair a{detail::input_tokens(o.a, mode), refs};
            const EvalPair b{detail::input_tokens(o.b, mode), refs};
            const auto s = significance_test(a, b, parse_metric(o.metric), o.reps, o.seed);
            if (o.format == "tsv") {
                out << s.metric << '\t' << format_double(s.p) << '\t' << (s.significant ? "yes" : "no") << '\n';
            } else {
                out << nlohmann::json{{"metric", s.metric}, {"p", s.p}, {"significant", s.significant},
                                      {"repetitions", s.repetitions}, {"seed", s.seed}}.dump()
                    << '\n';
            }
        } else if (*serve) {
            study::StudyService service(o.log);
            study::StudyServer server(service);
            if (!o.static_dir.empty()) server.mount_static(o.static_dir);
            err << "serving study API on http://" << o.host << ':' << o.port << '\n';
            if (!server.listen(o.host, o.port))
                throw Error("study", "cannot listen on " + o.host + ":" + std::to_string(o.port));
        } else if (*report) {
            const study::StudyService service(std::filesystem::path(o.log));
            if (!o.study_id.empty()) {
                out << service.report(o.study_id).dump() << '\n';
            } else {
                nlohmann::json all = nlohmann::json::object();
                for (const auto& ev : service.events())
                    if (ev.at("type") == "study_created") {
                        const auto id = ev["study"]["id"].get<std::string>();
                        all[id] = service.report(id);
                    }
                out << all.dump() << '\n';
            }
        } else if (*create) {
            study::StudyService service(std::filesystem::path(o.log));
            nlohmann::json spec;
            try {
                spec = nlohmann::json::parse(read_file(o.spec));
            } catch (const nlohmann::json::parse_error& e) {
                throw InputError("study", std::string("cannot parse study spec: ") + e.what());
            }
            out << service.create_study(spec).dump() << '\n';
        }
    } catch (const Error& e) {
        err << e.module() << ": " << e.what() << '\n';
        return kFailure;
    } catch (const std::exception& e) {
        err << "histmod: " << e.what() << '\n';
        return kFailure;
    }
    return kSuccess;
}

} // namespace histmod::cli
