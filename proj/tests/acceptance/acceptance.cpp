// Acceptance suite: one line per criterion, "PASS", "FAIL" or "SKIP",
// followed by the measured values and the wall-clock time. Exits non-zero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "histmod/corpus.hpp"
#include "histmod/evaluation.hpp"
#include "histmod/pipeline.hpp"
#include "histmod/selection.hpp"
#include "histmod/smt/alignment.hpp"
#include "histmod/smt/decoder.hpp"
#include "histmod/smt/language_model.hpp"
#include "histmod/study.hpp"
#include "histmod/study_server.hpp"
#include "histmod/subword.hpp"
#include "oracles.hpp"
#include "test_support.hpp"
#include "toy_task.hpp"

using namespace histmod;
using histmod::testing::TempDir;
using histmod::testing::toks_list;
using nlohmann::json;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

/// Accumulates named checks; the first failure message is kept.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failure_.empty()) failure_ = what;
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
    Outcome outcome() const {
        if (!failure_.empty()) return {Verdict::fail, failure_ + (notes_.empty() ? "" : " [" + notes_ + "]")};
        return {Verdict::pass, notes_};
    }

private:
    std::string failure_;
    std::string notes_;
};

std::string fixed(double v, int decimals = 1) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(decimals);
    s << v;
    return s.str();
}

std::string scientific(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1e", v);
    return buf;
}

EvalPair pair_of(const std::vector<std::string>& h, const std::vector<std::string>& r) {
    return {toks_list(h), toks_list(r)};
}

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
    Checks c;
    for (const auto& g : histmod::testing::golden_metric_cases()) {
        const auto s = score(pair_of(g.hyp, g.ref));
        // "to the printed decimal": the one-decimal report equals the
        // oracle rounded to one decimal
        c.expect(s.bleu == round_half_up(g.bleu), std::string(g.name) + ": BLEU " + fixed(s.bleu) + " != " + fixed(g.bleu));
        c.expect(s.ter == round_half_up(g.ter), std::string(g.name) + ": TER " + fixed(s.ter) + " != " + fixed(g.ter));
    }
    const auto id = score(pair_of({"a b c d"}, {"a b c d"}));
    const auto bp = score(pair_of({"a b c d"}, {"a b c d e"}));
    const auto shift = score(pair_of({"b a"}, {"a b"}));
    c.expect(id.bleu == 100.0 && id.ter == 0.0, "identity is not 100.0/0.0");
    c.expect(bp.bleu == 77.9, "brevity case is not 77.9");
    c.expect(shift.ter == 50.0, "shift case is not 50.0");
    c.note(std::to_string(histmod::testing::golden_metric_cases().size()) + " cases; identity " + fixed(id.bleu) + "/" +
           fixed(id.ter) + ", BP " + fixed(bp.bleu) + ", shift " + fixed(shift.ter));
    return c.outcome();
}

Outcome ter_bound() {
    Checks c;
    std::mt19937_64 rng(500);
    const std::vector<std::string> alphabet{"a", "b", "c", "d"};
    int matches = 0, below = 0;
    const int total = 500;
    for (int t = 0; t < total; ++t) {
        Tokens h, r;
        for (auto n = 1 + rng() % 6; n > 0; --n) h.push_back(alphabet[rng() % alphabet.size()]);
        for (auto n = 1 + rng() % 6; n > 0; --n) r.push_back(alphabet[rng() % alphabet.size()]);
        const int greedy = ter_segment(h, r).edits;
        const int best = histmod::testing::exhaustive_ter_edits(h, r);
        below += greedy < best;
        matches += greedy == best;
    }
    c.expect(below == 0, std::to_string(below) + " greedy results beat the exhaustive optimum");
    c.expect(matches * 100 >= total * 95, "greedy matched only " + std::to_string(matches) + "/" + std::to_string(total));
    c.note("exact on " + std::to_string(matches) + "/" + std::to_string(total));
    return c.outcome();
}

Outcome significance_calibration() {
    Checks c;
    const auto same = pair_of({"a b c", "d e f", "g h", "i j k l"}, {"a b c", "d x f", "g h i", "i j k"});
    const double p_bleu = ar_test(same, same, Metric::bleu, kDefaultRepetitions, 1);
    const double p_ter = ar_test(same, same, Metric::ter, kDefaultRepetitions, 1);
    c.expect(p_bleu == 1.0 && p_ter == 1.0, "identical systems gave p=" + fixed(p_bleu, 4) + "/" + fixed(p_ter, 4));

    // two systems drawn from the same corruption process are exchangeable
    std::mt19937_64 rng(2019);
    auto corrupt = [&](const Tokens& ref) {
        Tokens out;
        for (const auto& w : ref) out.push_back(rng() % 10 < 7 ? w : "v" + std::to_string(rng() % 30));
        return out;
    };
    const int trials = 200;
    int rejections = 0;
    EvalPair first_a, first_b;
    for (int t = 0; t < trials; ++t) {
        EvalPair a, b;
        for (int s = 0; s < 40; ++s) {
            Tokens ref;
            for (auto n = 4 + rng() % 8; n > 0; --n) ref.push_back("v" + std::to_string(rng() % 30));
            a.references.push_back(ref);
            b.references.push_back(ref);
            a.hypotheses.push_back(corrupt(ref));
            b.hypotheses.push_back(corrupt(ref));
        }
        if (t == 0) first_a = a, first_b = b;
        rejections += ar_test(a, b, Metric::bleu, kDefaultRepetitions, static_cast<std::uint64_t>(t)) < kSignificanceLevel;
    }
    const double rate = double(rejections) / trials;
    c.expect(rate >= 0.01 && rate <= 0.10, "null rejection rate " + fixed(rate, 3) + " outside [0.01, 0.10]");

    set_thread_count(1);
    const double p1 = ar_test(first_a, first_b, Metric::bleu, kDefaultRepetitions, 99);
    set_thread_count(4);
    const double p4 = ar_test(first_a, first_b, Metric::bleu, kDefaultRepetitions, 99);
    set_thread_count(0);
    c.expect(p1 == p4 && p1 == ar_test(first_a, first_b, Metric::bleu, kDefaultRepetitions, 99),
             "fixed seed did not reproduce p");
    c.note("identical p=" + fixed(p_bleu, 1) + ", null rejection " + std::to_string(rejections) + "/" +
           std::to_string(trials) + " = " + fixed(rate, 3) + ", seeded p=" + fixed(p1, 4) + " reproduced");
    return c.outcome();
}

Outcome fda_equivalence() {
    Checks c;
    std::mt19937_64 rng(2024);
    int equal = 0, monotone = 0;
    for (int trial = 0; trial < 200; ++trial) {
        FdaConfig cfg;
        cfg.max_ngram_order = 1 + static_cast<int>(rng() % 3);
        cfg.length_normalize = rng() % 2;
        const auto pool = histmod::testing::random_sentences(rng, 1 + rng() % 30, 8);
        const auto seed = histmod::testing::random_sentences(rng, 1 + rng() % 5, 8);
        cfg.budget = rng() % (pool.size() + 1);
        equal += fda_select(pool, seed, cfg) == histmod::testing::naive_select(pool, seed, cfg);
        monotone += histmod::testing::fda_decay_monotone(pool, seed, cfg);
    }
    c.expect(equal == 200, "lazy selection differs from the naive reference on " + std::to_string(200 - equal) + " pools");
    c.expect(monotone == 200, "decay monotonicity violated on " + std::to_string(200 - monotone) + " pools");
    c.note(std::to_string(equal) + "/200 identical, " + std::to_string(monotone) + "/200 monotone");
    return c.outcome();
}

Outcome bpe_round_trip() {
    Checks c;
    const auto training = histmod::testing::random_bpe_corpus(99, 200);
    const auto model = bpe_learn(training, 200);
    const auto sentences = histmod::testing::random_bpe_corpus(1234, 1000);
    int round_trips = 0;
    for (const auto& s : sentences) round_trips += bpe_revert(bpe_apply(s, model)) == s;
    c.expect(round_trips == 1000, "revert(apply(x)) != x on " + std::to_string(1000 - round_trips) + " sentences");

    const BpeSegmenter seg(model);
    int words = 0, reproduced = 0;
    for (const auto& s : training)
        for (const auto& w : s) {
            ++words;
            reproduced += seg.segment_word(w) == histmod::testing::replay_merges(utf8_chars(w), model.merges);
        }
    c.expect(reproduced == words, "training segmentation not reproduced for " + std::to_string(words - reproduced) + " words");

    int oracle_equal = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto corpus = histmod::testing::random_bpe_corpus(seed, 30);
        oracle_equal += bpe_learn(corpus, 60).merges == histmod::testing::brute_force_merges(corpus, 60);
    }
    const auto classic = toks_list({"low low low low low lower lower newest newest newest newest newest newest",
                                    "widest widest widest"});
    oracle_equal += bpe_learn(classic, 10).merges == histmod::testing::brute_force_merges(classic, 10);
    c.expect(oracle_equal == 21, "merges differ from the pair-count oracle on " + std::to_string(21 - oracle_equal) + " corpora");
    c.note(std::to_string(round_trips) + "/1000 round trips, " + std::to_string(reproduced) + "/" + std::to_string(words) +
           " training words, " + std::to_string(oracle_equal) + "/21 oracle corpora");
    return c.outcome();
}

Outcome smt_correctness() {
    Checks c;
    // IBM-1 likelihood
    int monotone = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        std::mt19937_64 rng(seed);
        ParallelCorpus corpus{"toy", {}, {}};
        for (int i = 0; i < 25; ++i) {
            std::string s, t;
            for (auto n = 1 + rng() % 5; n > 0; --n) s += "s" + std::to_string(rng() % 6) + " ";
            for (auto n = 1 + rng() % 5; n > 0; --n) t += "t" + std::to_string(rng() % 6) + " ";
            corpus.add(Sentence(s), Sentence(t));
        }
        std::vector<double> ll;
        smt::train_ibm1(corpus, {10, 0.0}, &ll);
        bool ok = ll.size() == 11;
        for (std::size_t i = 1; i < ll.size(); ++i) ok = ok && ll[i] >= ll[i - 1] - 1e-9;
        monotone += ok;
    }
    c.expect(monotone == 3, "IBM-1 log-likelihood decreased on " + std::to_string(3 - monotone) + " corpora");

    // LM normalization
    std::mt19937_64 rng(17);
    std::vector<Tokens> text;
    for (int i = 0; i < 60; ++i) {
        Tokens s;
        for (auto n = 1 + rng() % 8; n > 0; --n) s.push_back("w" + std::to_string(rng() % 12));
        text.push_back(s);
    }
    smt::LmOptions lo;
    lo.order = 4;
    const auto lm = smt::train_lm(text, lo);
    auto vocab = lm.predicted_vocabulary();
    auto history_words = vocab;
    history_words.push_back("<s>");
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
        std::vector<std::string> ctx;
        for (auto n = rng() % 4; n > 0; --n) ctx.push_back(history_words[rng() % history_words.size()]);
        double sum = 0;
        for (const auto& w : vocab) sum += lm.prob(w, ctx);
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    c.expect(worst <= 1e-6, "LM distribution off by " + std::to_string(worst));

    // exhaustive-search decoder equivalence
    std::mt19937_64 drng(2024);
    int equal = 0, inputs = 0;
    for (int m = 0; m < 50; ++m) {
        const auto model = histmod::testing::random_decoder_model(drng);
        // every input of length 1..4 over the model's source words plus an unknown word
        const std::vector<std::string> alphabet{"s0", "s1", "s2", "s3", "s9"};
        for (std::size_t len = 1; len <= 4; ++len) {
            std::size_t combos = 1;
            for (std::size_t i = 0; i < len; ++i) combos *= alphabet.size();
            for (std::size_t code = 0; code < combos; ++code) {
                Tokens src;
                for (std::size_t i = 0, x = code; i < len; ++i, x /= alphabet.size()) src.push_back(alphabet[x % alphabet.size()]);
                const double got = smt::decode(model, src, smt::DecodeOptions::exhaustive()).score;
                const double want = histmod::testing::brute_force_best_score(model, src);
                equal += std::abs(got - want) <= 1e-9;
                ++inputs;
            }
        }
    }
    c.expect(equal == inputs, "decoder missed the optimum on " + std::to_string(inputs - equal) + "/" + std::to_string(inputs) + " inputs");
    c.note("IBM-1 monotone " + std::to_string(monotone) + "/3, LM max |sum-1| " + scientific(worst) +
           ", decoder exact on " + std::to_string(equal) + "/" + std::to_string(inputs) + " inputs over 50 models");
    return c.outcome();
}

Outcome toy_pipeline() {
    Checks c;
    TempDir dir;
    const histmod::testing::ToyTask task(1);
    const auto files = task.write(dir.path(), {{"significance", {{"repetitions", kDefaultRepetitions}}}});
    const auto result = run_pipeline(PipelineConfig::load(files.config));
    const auto& r = result.report;
    c.expect(result.ran_count() == 6, "not every stage ran");
    c.expect(r.baseline.has_value() && r.significance.has_value(), "report lacks baseline or significance");
    if (!r.baseline || !r.significance) return c.outcome();
    c.expect(r.bleu >= 90.0, "BLEU " + fixed(r.bleu) + " < 90");
    c.expect(r.bleu - r.baseline->bleu >= 20.0, "gain over baseline " + fixed(r.bleu - r.baseline->bleu) + " < 20");
    c.expect(r.significance->p < 0.05, "p = " + fixed(r.significance->p, 4));
    c.note("BLEU " + fixed(r.bleu) + " vs baseline " + fixed(r.baseline->bleu) + ", TER " + fixed(r.ter) + " vs " +
           fixed(r.baseline->ter) + ", p=" + fixed(r.significance->p, 4) + ", " +
           std::to_string(task.train_src.size()) + " train / " + std::to_string(task.test_src.size()) + " test / " +
           std::to_string(read_lines(files.config.parent_path() / "out" / "selected.txt").size()) + " backtranslated");
    return c.outcome();
}

// Builds a study event log by hand and reads it back through the service.
Outcome report_aggregation() {
    Checks c;
    std::vector<json> events;
    auto created = [&](const std::string& id, const std::string& kind, const std::vector<std::string>& item_ids,
                       const std::vector<std::string>& systems) {
        json items = json::array();
        for (std::size_t i = 0; i < item_ids.size(); ++i)
            items.push_back({{"id", item_ids[i]}, {"original", "olde " + item_ids[i]}, {"modernized", "old " + item_ids[i]},
                             {"system", systems[i]}});
        std::set<std::string> sys(systems.begin(), systems.end());
        events.push_back({{"v", 1}, {"type", "study_created"},
                          {"study", {{"id", id}, {"kind", kind}, {"systems", sys}, {"items", items}, {"created", "2020-01-01T00:00:00Z"}}}});
    };
    int session_no = 0;
    auto opened = [&](const std::string& study, const std::vector<std::string>& order, json participant) {
        const std::string id = "session-" + std::to_string(++session_no);
        events.push_back({{"v", 1}, {"type", "session_opened"},
                          {"session", {{"id", id}, {"study", study}, {"participant", participant}, {"order", order},
                                       {"first", std::vector<std::string>(order.size(), "original")}, {"seed", session_no}}}});
        return id;
    };

    // comprehension: 100 SMT items, 10 sessions, counts 32/614/276/78; plus
    // a system with awkward counts for the row-sum check
    std::vector<std::string> ids, systems;
    for (int i = 0; i < 100; ++i) ids.push_back("smt-" + std::to_string(i)), systems.push_back("SMT");
    for (int i = 0; i < 3; ++i) ids.push_back("odd-" + std::to_string(i)), systems.push_back("ODD");
    created("study-1", "comprehension", ids, systems);
    std::vector<std::string> cats;
    cats.insert(cats.end(), 32, "original");
    cats.insert(cats.end(), 614, "modernized");
    cats.insert(cats.end(), 276, "indifferent");
    cats.insert(cats.end(), 78, "not_equal");
    std::mt19937_64 shuffle(4);
    for (std::size_t i = cats.size(); i > 1; --i) std::swap(cats[i - 1], cats[shuffle() % i]);
    const json demo{{"age_band", "21–30"}, {"familiarity", "Read an adaptation"}};
    for (int s = 0; s < 10; ++s) {
        const auto sid = opened("study-1", std::vector<std::string>(ids.begin(), ids.begin() + 100), demo);
        for (int k = 0; k < 100; ++k)
            events.push_back({{"v", 1}, {"type", "response_recorded"}, {"session", sid}, {"item", ids[static_cast<std::size_t>(k)]},
                              {"answer", cats[static_cast<std::size_t>(s * 100 + k)]}, {"timestamp", "2020-01-01T00:00:00Z"}});
    }
    const auto odd = opened("study-1", {"odd-0", "odd-1", "odd-2"}, demo);
    for (int k = 0; k < 3; ++k)
        events.push_back({{"v", 1}, {"type", "response_recorded"}, {"session", odd}, {"item", "odd-" + std::to_string(k)},
                          {"answer", study::comprehension_categories()[static_cast<std::size_t>(k)]}, {"timestamp", "2020-01-01T00:00:00Z"}});

    // rating: four raters, ten SMT items, fluency means 5.0/2.1/3.2/4.5
    std::vector<std::string> rids;
    for (int i = 0; i < 10; ++i) rids.push_back("r" + std::to_string(i));
    created("study-2", "rating", rids, std::vector<std::string>(10, "SMT"));
    const std::vector<int> fluency_sums{50, 21, 32, 45};
    for (std::size_t r = 0; r < fluency_sums.size(); ++r) {
        const auto sid = opened("study-2", rids, {{"rater", "Scholar " + std::to_string(r + 1)}});
        for (int k = 0; k < 10; ++k) {
            const int base = fluency_sums[r] / 10, extra = fluency_sums[r] % 10;
            const int fluency = base + (k < extra ? 1 : 0);
            events.push_back({{"v", 1}, {"type", "response_recorded"}, {"session", sid}, {"item", rids[static_cast<std::size_t>(k)]},
                              {"ratings", {{"fluency", fluency}, {"lexical_meaning", 3}, {"syntax", 3}, {"semantic", 3}, {"modernization", 3}}},
                              {"timestamp", "2020-01-01T00:00:00Z"}});
        }
    }

    TempDir dir;
    {
        std::ofstream log(dir / "events.jsonl");
        for (const auto& e : events) log << e.dump() << '\n';
    }
    const study::StudyService service(dir / "events.jsonl");
    const auto comp = service.report("study-1");
    const auto& smt = comp["systems"]["SMT"];
    const std::vector<double> want{3.2, 61.4, 27.6, 7.8};
    std::string row;
    for (std::size_t k = 0; k < 4; ++k) {
        const double got = smt[study::comprehension_categories()[k]].get<double>();
        row += (k ? "/" : "") + fixed(got);
        c.expect(got == want[k], "SMT " + study::comprehension_categories()[k] + " = " + fixed(got));
    }
    for (const auto& [sys, entry] : comp["systems"].items()) {
        double sum = 0;
        for (const auto& cat : study::comprehension_categories()) sum += entry[cat].get<double>();
        c.expect(std::abs(sum - 100.0) <= 0.1 + 1e-9, sys + " row sums to " + fixed(sum, 2));
    }
    const auto rating = service.report("study-2")["systems"]["SMT"];
    const double avg = rating["average"]["fluency"].get<double>();
    std::string raters;
    for (int r = 1; r <= 4; ++r)
        raters += (r > 1 ? "," : "") + fixed(rating["raters"]["Scholar " + std::to_string(r)]["fluency"].get<double>());
    c.expect(raters == "5.0,2.1,3.2,4.5", "rater fluency means " + raters);
    c.expect(avg == 3.7, "fluency average " + fixed(avg));
    c.expect(study::StudyService::replay(service.events())->report("study-1") == comp, "replay changed the report");
    c.note("SMT row " + row + ", fluency (" + raters + ") -> " + fixed(avg) + ", all rows sum to 100 +- 0.1");
    return c.outcome();
}

struct SplitReference {
    const char* split;
    const char* sentences;
    const char* tokens_original;
    const char* tokens_modern;
    const char* vocab_original;
    const char* vocab_modern;
};

// Copy-through baseline (TER/BLEU) and printed corpus statistics per split.
struct DatasetReference {
    const char* dir;
    double ter;
    double bleu;
    std::vector<SplitReference> splits;
};

/// `printed` is a count as printed ("35.2K", "2000"); `n` matches when it
/// rounds to the printed precision.
bool matches_printed(std::uint64_t n, const std::string& printed) {
    const char suffix = printed.back();
    const double unit = suffix == 'K' ? 1e3 : suffix == 'M' ? 1e6 : 1.0;
    const std::string digits = unit == 1.0 ? printed : printed.substr(0, printed.size() - 1);
    const auto dot = digits.find('.');
    const double step = unit * (dot == std::string::npos ? 1.0 : std::pow(10.0, -double(digits.size() - dot - 1)));
    return std::abs(double(n) - std::stod(digits) * unit) <= step / 2;
}

Outcome dataset_baseline() {
    const char* root = std::getenv("HISTMOD_DATA_DIR");
    const std::vector<DatasetReference> refs{
        {"dutch-bible", 57.9, 12.9,
         {{"train", "35.2K", "870.4K", "862.4K", "53.8K", "42.8K"},
          {"dev", "2000", "56.4K", "54.8K", "9.1K", "7.8K"},
          {"test", "5000", "145.8K", "140.8K", "10.5K", "9.0K"}}},
        {"el-quijote", 44.2, 36.3,
         {{"train", "10K", "283.3K", "283.2K", "31.7K", "31.3K"},
          {"dev", "2000", "53.2K", "53.2K", "10.7K", "10.6K"},
          {"test", "2000", "41.8K", "42.0K", "8.9K", "9.0K"}}},
        {"oe-me", 91.0, 2.8,
         {{"train", "2716", "64.3K", "69.6K", "13.3K", "8.6K"},
          {"dev", "500", "12.2K", "13.3K", "4.2K", "3.2K"},
          {"test", "500", "11.9K", "12.9K", "4.1K", "3.2K"}}},
    };
    if (!root) return {Verdict::skip, "HISTMOD_DATA_DIR not set; datasets not available"};
    Checks c;
    int found = 0;
    for (const auto& ref : refs) {
        const auto dir = std::filesystem::path(root) / ref.dir;
        if (!std::filesystem::exists(dir / "test.orig") || !std::filesystem::exists(dir / "test.mod")) continue;
        ++found;
        const auto corpus = load_parallel(dir / "test.orig", dir / "test.mod", TokenizerMode::punct_split);
        const auto s = score({token_lists(corpus.source), token_lists(corpus.target)});
        c.expect(std::abs(s.ter - ref.ter) <= 2.0, std::string(ref.dir) + " baseline TER " + fixed(s.ter));
        c.expect(std::abs(s.bleu - ref.bleu) <= 2.0, std::string(ref.dir) + " baseline BLEU " + fixed(s.bleu));
        for (const auto& split : ref.splits) {
            const auto orig = dir / (std::string(split.split) + ".orig");
            const auto mod = dir / (std::string(split.split) + ".mod");
            if (!std::filesystem::exists(orig) || !std::filesystem::exists(mod)) continue;
            const auto part = load_parallel(orig, mod, TokenizerMode::punct_split);
            const auto so = corpus_stats(part.source), sm = corpus_stats(part.target);
            const std::string where = std::string(ref.dir) + " " + split.split;
            c.expect(matches_printed(so.sentences, split.sentences), where + " |S| " + format_km(so.sentences));
            c.expect(matches_printed(so.tokens, split.tokens_original), where + " original |T| " + format_km(so.tokens));
            c.expect(matches_printed(sm.tokens, split.tokens_modern), where + " modern |T| " + format_km(sm.tokens));
            c.expect(matches_printed(so.vocab, split.vocab_original), where + " original |V| " + format_km(so.vocab));
            c.expect(matches_printed(sm.vocab, split.vocab_modern), where + " modern |V| " + format_km(sm.vocab));
        }
        c.note(std::string(ref.dir) + " " + fixed(s.ter) + "/" + fixed(s.bleu));
    }
    if (found == 0) return {Verdict::skip, std::string("no test.orig/test.mod pairs under ") + root};
    return c.outcome();
}

Outcome study_api() {
    Checks c;
    study::StudyService service;
    study::StudyServer server(service);
    const int port = server.bind_any_port("127.0.0.1");
    if (port <= 0) return {Verdict::fail, "cannot bind a local port"};
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    std::vector<json> participant_payloads;
    auto call = [&](const std::string& method, const std::string& path, const json& body, bool participant) {
        const auto res = method == "GET" ? client.Get(path) : client.Post(path, body.dump(), "application/json");
        if (!res || res->status >= 300) throw std::runtime_error(method + " " + path + " failed");
        auto j = json::parse(res->body);
        if (participant) participant_payloads.push_back(j);
        return j;
    };
    try {
        const json demo{{"age_band", "31–40"}, {"familiarity", "Unfamiliar"}};
        // blindness: a two-system study answered through the API
        json items = json::array();
        for (const char* sys : {"SYSTEM_ALPHA", "SYSTEM_BETA"})
            for (int i = 0; i < 4; ++i)
                items.push_back({{"id", std::string(sys) + "-item-" + std::to_string(i)},
                                 {"original", "olde worde " + std::to_string(i)},
                                 {"modernized", "old word " + std::to_string(i)},
                                 {"system", sys}});
        const auto sid = call("POST", "/studies", {{"kind", "comprehension"}, {"items", items}}, false)["study_id"].get<std::string>();
        for (int s = 0; s < 5; ++s) {
            const auto ses = call("POST", "/studies/" + sid + "/sessions", {{"participant", demo}, {"seed", s}}, true)["session_id"].get<std::string>();
            for (;;) {
                const auto q = call("GET", "/sessions/" + ses + "/next", {}, true);
                if (q.contains("done")) break;
                call("POST", "/sessions/" + ses + "/responses", {{"question_id", q["question_id"]}, {"choice", s % 2 ? "first" : "second"}}, true);
            }
        }
        const std::set<std::string> allowed{"session_id", "questions", "question_id", "position", "total",
                                            "text_a",     "text_b",    "done",        "recorded", "remaining"};
        std::size_t fields = 0;
        for (const auto& p : participant_payloads)
            for (const auto& [k, v] : p.items()) {
                ++fields;
                c.expect(allowed.count(k) > 0, "participant payload has field '" + k + "'");
                const auto text = v.dump();
                for (const char* banned : {"SYSTEM_", "system", "original", "modernized", "-item-"})
                    c.expect(text.find(banned) == std::string::npos, "field '" + k + "' leaks '" + banned + "'");
            }

        // randomization: 100 seeded sessions on a one-item study
        const auto one = call("POST", "/studies",
                              {{"kind", "comprehension"},
                               {"items", {{{"id", "only"}, {"original", "olde worde"}, {"modernized", "old word"}, {"system", "S"}}}}},
                              false)["study_id"].get<std::string>();
        int original_first = 0;
        for (int s = 0; s < 100; ++s) {
            const auto ses = call("POST", "/studies/" + one + "/sessions", {{"participant", demo}, {"seed", 1000 + s}}, true)["session_id"].get<std::string>();
            original_first += call("GET", "/sessions/" + ses + "/next", {}, true)["text_a"] == "olde worde";
        }
        c.expect(original_first >= 40 && original_first <= 60, "original shown first " + std::to_string(original_first) + "/100");
        c.note(std::to_string(participant_payloads.size()) + " payloads / " + std::to_string(fields) +
               " fields scanned, original first " + std::to_string(original_first) + "/100, modernized first " +
               std::to_string(100 - original_first) + "/100");
    } catch (const std::exception& e) {
        c.expect(false, e.what());
    }
    server.stop();
    thread.join();
    return c.outcome();
}

struct Criterion {
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
};

} // namespace

int main() {
    warning_sink() = [](std::string_view) {};
    const std::vector<Criterion> criteria{
        {"metric-oracles", 1, metric_oracles},
        {"ter-bound", 120, ter_bound},
        {"significance-calibration", 300, significance_calibration},
        {"fda-oracle-equivalence", 60, fda_equivalence},
        {"bpe-round-trip", 60, bpe_round_trip},
        {"smt-correctness", 300, smt_correctness},
        {"toy-pipeline", 600, toy_pipeline},
        {"study-report-aggregation", 60, report_aggregation},
        {"dataset-baseline", 600, dataset_baseline},
        {"study-api-blindness", 60, study_api},
    };
    int failures = 0;
    for (const auto& cr : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.run();
        } catch (const std::exception& e) {
            o = {Verdict::fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.verdict == Verdict::pass && secs > cr.limit_seconds) {
            o = {Verdict::fail, o.detail + "; runtime over the " + fixed(cr.limit_seconds, 0) + " s limit"};
        }
        failures += o.verdict == Verdict::fail;
        const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
        std::printf("%s  %-26s %s (%.2f s, limit %.0f s)\n", tag, cr.name, o.detail.c_str(), secs, cr.limit_seconds);
        std::fflush(stdout);
    }
    std::printf("%s: %d failed\n", failures ? "FAILED" : "OK", failures);
    return failures ? 1 : 0;
}
