#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "histmod/smt/decoder.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace histmod;
using namespace histmod::smt;
using histmod::testing::toks;
using histmod::testing::toks_list;

namespace {

TranslationModel identity_model() {
    TranslationModel m;
    for (const std::string w : {"a", "b", "c"}) m.phrases.add({w}, {{w}, 1.0, 1.0});
    LmOptions o;
    o.order = 2;
    m.lm = train_lm(toks_list({"a b c", "a b", "b c", "c a"}), o);
    return m;
}

TranslationModel random_model(std::mt19937_64& rng) { return histmod::testing::random_decoder_model(rng); }

double brute_force_best(const TranslationModel& m, const Tokens& source) {
    return histmod::testing::brute_force_best_score(m, source);
}

} // namespace

TEST(Decoder, IdentityModel) {
    const auto m = identity_model();
    EXPECT_EQ(join(decode(m, toks("a b c")).output), "a b c");
    EXPECT_EQ(join(decode(m, toks("c a")).output), "c a");
}

TEST(Decoder, OutOfVocabularyWordsCopiedThrough) {
    const auto m = identity_model();
    const auto r = decode(m, toks("a zzz b"));
    EXPECT_EQ(join(r.output), "a zzz b");
}

TEST(Decoder, EmptyInputGivesEmptyOutput) {
    EXPECT_TRUE(decode(identity_model(), {}).output.empty());
}

TEST(Decoder, LanguageModelWeightFlipsChoiceAtThreshold) {
    TranslationModel m;
    m.phrases.add({"x"}, {{"p"}, 0.6, 1.0});
    m.phrases.add({"x"}, {{"q"}, 0.4, 1.0});
    LmOptions o;
    o.order = 2;
    m.lm = train_lm(toks_list({"q", "q", "q", "p"}), o);
    const double lm_p = m.lm.score_sentence({"p"}).total, lm_q = m.lm.score_sentence({"q"}).total;
    ASSERT_GT(lm_q, lm_p);
    // ln 0.6 + w lm_p = ln 0.4 + w lm_q
    const double threshold = (std::log(0.6) - std::log(0.4)) / (lm_q - lm_p);
    m.weights.values = {0, 1, 0, 0, 0, 0};
    m.weights.values[kLm] = 0.9 * threshold;
    EXPECT_EQ(join(decode(m, {"x"}).output), "p");
    m.weights.values[kLm] = 1.1 * threshold;
    EXPECT_EQ(join(decode(m, {"x"}).output), "q");
}

TEST(Decoder, ExhaustiveSearchMatchesEnumeration) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_model(rng);
        Tokens src;
        for (auto n = 1 + rng() % 4; n > 0; --n) src.push_back("s" + std::to_string(rng() % 5));
        const auto r = decode(m, src, DecodeOptions::exhaustive());
        EXPECT_NEAR(r.score, brute_force_best(m, src), 1e-9) << "trial " << trial << ": " << join(src);
    }
}

TEST(Decoder, ScoreMatchesRescoredDerivation) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = random_model(rng);
        Tokens src;
        for (auto n = 1 + rng() % 5; n > 0; --n) src.push_back("s" + std::to_string(rng() % 5));
        const auto r = decode(m, src);
        const auto f = score_derivation(m, src, r.derivation);
        for (std::size_t k = 0; k < kFeatureCount; ++k) EXPECT_NEAR(f[k], r.features[k], 1e-9);
        EXPECT_NEAR(m.weights.dot(f), r.score, 1e-9);
    }
}

TEST(Decoder, ArgmaxInvariantToPositiveWeightScaling) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        auto m = random_model(rng);
        Tokens src;
        for (auto n = 1 + rng() % 4; n > 0; --n) src.push_back("s" + std::to_string(rng() % 5));
        const auto a = decode(m, src, DecodeOptions::exhaustive());
        for (auto& v : m.weights.values) v *= 3.5;
        const auto b = decode(m, src, DecodeOptions::exhaustive());
        // a's derivation stays optimal; outputs may differ only between exact ties
        EXPECT_NEAR(m.weights.dot(score_derivation(m, src, a.derivation)), b.score, 1e-8);
        EXPECT_NEAR(3.5 * a.score, b.score, 1e-8);
    }
}

TEST(Decoder, NbestDistinctAndOrdered) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_model(rng);
        Tokens src;
        for (auto n = 2 + rng() % 3; n > 0; --n) src.push_back("s" + std::to_string(rng() % 4));
        const auto opts = DecodeOptions::from(m);
        const auto nbest = decode_nbest(m, src, 10, opts);
        ASSERT_FALSE(nbest.empty());
        EXPECT_EQ(nbest.front().output, decode(m, src, opts).output);
        std::set<Tokens> seen;
        for (std::size_t i = 0; i < nbest.size(); ++i) {
            EXPECT_TRUE(seen.insert(nbest[i].output).second);
            if (i) {
                EXPECT_LE(nbest[i].score, nbest[i - 1].score + 1e-9);
            }
            EXPECT_NEAR(m.weights.dot(score_derivation(m, src, nbest[i].derivation)), nbest[i].score, 1e-9);
        }
    }
}

TEST(Weights, SerializeRoundTrip) {
    LogLinearWeights w;
    w.values = {0.25, -0.125, 0.5, 1e-3, -2.0, 0.0625};
    const auto text = w.serialize();
    EXPECT_NE(text.find("phrase_forward"), std::string::npos);
    EXPECT_EQ(LogLinearWeights::parse(text), w);
}

TEST(Weights, RejectsMalformedInput) {
    EXPECT_THROW(LogLinearWeights::parse("lm banana\n"), InputError);
}
