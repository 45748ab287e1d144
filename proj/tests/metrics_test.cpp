#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dbleu/metrics.hpp"
#include "oracle.hpp"

using namespace dbleu;

namespace {

Segment seg(std::string id, std::vector<std::pair<std::string, double>> refs) {
    Segment s{std::move(id), {}};
    for (std::size_t j = 0; j < refs.size(); ++j)
        s.references.push_back({"r" + std::to_string(j), tokenize(refs[j].first), refs[j].second, j == 0});
    return s;
}

MetricConfig cfg(MetricKind k, std::size_t n = 2) { return MetricConfig::defaults_for(k, n); }

} // namespace

TEST(BrevityPenalty, Examples) {
    EXPECT_EQ(brevity_penalty(10, 10), 1.0);
    EXPECT_EQ(brevity_penalty(12, 10), 1.0);
    EXPECT_NEAR(brevity_penalty(5, 10), 0.36787944117144233, 1e-15);  // e^(1-2)
    EXPECT_THROW(brevity_penalty(0, 10), UsageError);
    EXPECT_THROW(brevity_penalty(3, 0), UsageError);
}

TEST(ClosestRefLength, Examples) {
    std::vector<std::size_t> a{2, 5}, b{3, 5}, c{7}, d{5, 3};
    EXPECT_EQ(closest_ref_length(4, a), 5u);
    EXPECT_EQ(closest_ref_length(4, b), 3u);
    EXPECT_EQ(closest_ref_length(4, d), 3u);
    EXPECT_EQ(closest_ref_length(7, c), 7u);
    EXPECT_THROW(closest_ref_length(7, std::span<const std::size_t>{}), UsageError);
}

TEST(CorpusBleu, ExactMatch) {
    std::vector<Segment> segs{seg("1", {{"the cat sat", 1.0}})};
    HypothesisSet h{{"1", tokenize("the cat sat")}};
    auto r = corpus_bleu(h, segs, cfg(MetricKind::bleu));
    EXPECT_EQ(r.score, 1.0);
    EXPECT_EQ(r.brevity_penalty, 1.0);
    EXPECT_EQ(r.hyp_length, 3u);
    EXPECT_EQ(r.ref_length, 3u);
    EXPECT_EQ(r.segments_scored, 1u);
}

TEST(CorpusBleu, ClippingZeroesBigram) {
    std::vector<Segment> segs{seg("1", {{"the cat", 1.0}})};
    HypothesisSet h{{"1", tokenize("the the")}};
    auto r = corpus_bleu(h, segs, cfg(MetricKind::bleu));
    ASSERT_EQ(r.precisions.size(), 2u);
    EXPECT_EQ(r.precisions[0], 0.5);
    EXPECT_EQ(r.precisions[1], 0.0);
    EXPECT_EQ(r.score, 0.0);
    EXPECT_EQ(r.nonpositive_orders, std::vector<std::size_t>{2});
}

TEST(CorpusBleu, MultiReferenceClipping) {
    std::vector<Segment> segs{seg("1", {{"a b c", 1.0}, {"a a", 1.0}})};
    HypothesisSet h{{"1", tokenize("a a b")}};
    auto r = corpus_bleu(h, segs, cfg(MetricKind::bleu));
    EXPECT_EQ(r.precisions[0], 1.0);
    EXPECT_EQ(r.precisions[1], 1.0);
    EXPECT_EQ(r.ref_length, 3u);
    EXPECT_EQ(r.brevity_penalty, 1.0);
    EXPECT_EQ(r.score, 1.0);
}

TEST(CorpusBleu, ErrorPaths) {
    std::vector<Segment> segs{seg("1", {{"a", 1.0}})};
    EXPECT_THROW(corpus_bleu({}, segs, cfg(MetricKind::bleu)), DataError);
    EXPECT_THROW(corpus_bleu({{"2", tokenize("a")}}, segs, cfg(MetricKind::bleu)), DataError);
    MetricConfig bad = cfg(MetricKind::bleu, 10);
    EXPECT_THROW(corpus_bleu({{"1", tokenize("a")}}, segs, bad), UsageError);
}

TEST(CorpusBleu, EmptyHypothesisOnlyAffectsLength) {
    std::vector<Segment> segs{seg("1", {{"a b", 1.0}}), seg("2", {{"c d", 1.0}})};
    HypothesisSet h{{"1", tokenize("a b")}, {"2", TokenSequence{}}};
    auto r = corpus_bleu(h, segs, cfg(MetricKind::bleu));
    EXPECT_EQ(r.precisions[0], 1.0);
    EXPECT_EQ(r.precisions[1], 1.0);
    EXPECT_EQ(r.hyp_length, 2u);
    EXPECT_EQ(r.ref_length, 4u);
    EXPECT_NEAR(r.score, std::exp(1.0 - 2.0), 1e-15);
}

TEST(CorpusDbleu, WorkedExample) {
    std::vector<Segment> segs{seg("1", {{"a b", 0.5}, {"a c", 1.0}})};
    HypothesisSet h{{"1", tokenize("a b")}};
    auto r = corpus_dbleu(h, segs, cfg(MetricKind::dbleu));
    EXPECT_NEAR(r.precisions[0], 0.75, 1e-15);
    EXPECT_NEAR(r.precisions[1], 0.5, 1e-15);
    EXPECT_EQ(r.brevity_penalty, 1.0);
    EXPECT_NEAR(r.score, 0.6123724356957945, 1e-12);  // sqrt(0.375)
}

TEST(CorpusDbleu, RejectsSegmentWithoutPositiveWeight) {
    std::vector<Segment> segs{seg("ok", {{"a", 0.5}}), seg("bad", {{"a", -0.5}, {"b", 0.0}})};
    HypothesisSet h{{"ok", tokenize("a")}, {"bad", tokenize("a")}};
    try {
        corpus_dbleu(h, segs, cfg(MetricKind::dbleu));
        FAIL() << "expected DataError";
    } catch (const DataError &e) {
        EXPECT_NE(std::string(e.what()).find("'bad'"), std::string::npos);
    }
    EXPECT_NO_THROW(corpus_bleu(h, segs, cfg(MetricKind::bleu)));
}

TEST(CorpusDbleu, NegativePrecisionForcesZero) {
    std::vector<Segment> segs{seg("1", {{"x y", 0.5}, {"a b", -1.0}})};
    HypothesisSet h{{"1", tokenize("a b")}};
    auto r = corpus_dbleu(h, segs, cfg(MetricKind::dbleu));
    EXPECT_LT(r.precisions[0], 0.0);
    EXPECT_EQ(r.score, 0.0);
    EXPECT_EQ(r.nonpositive_orders, (std::vector<std::size_t>{1, 2}));
}

TEST(CorpusDbleu, HypothesisEqualToTopReferenceScoresOne) {
    std::vector<Segment> segs{seg("1", {{"x y z", 0.2}, {"a b c d", 0.9}, {"a b", -0.4}})};
    HypothesisSet h{{"1", tokenize("a b c d")}};
    EXPECT_EQ(corpus_dbleu(h, segs, cfg(MetricKind::dbleu)).score, 1.0);
}

TEST(CorpusDbleu, ZeroWeightReferenceAddsNothing) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> w(0.1, 1.0);
    for (int t = 0; t < 200; ++t) {
        Segment s{"1", {}};
        for (int j = 0; j < 3; ++j)
            s.references.push_back({"r" + std::to_string(j), TokenSequence{oracle::random_words(rng, 1, 8, 6)},
                                    j == 0 ? w(rng) : 2 * w(rng) - 1.1, j == 0});
        TokenSequence h{oracle::random_words(rng, 1, 8, 6)};
        auto before = dbleu_segment_stats(h, s, 3);
        s.references.push_back({"zero", TokenSequence{oracle::random_words(rng, 1, 8, 6)}, 0.0, false});
        auto after = dbleu_segment_stats(h, s, 3);
        for (std::size_t n = 0; n < 3; ++n) {
            ASSERT_EQ(after.candidates[n], before.candidates[n]);
            ASSERT_GE(after.matched[n], before.matched[n]);
        }
    }
}

TEST(SentenceBleu, Examples) {
    MetricConfig c = cfg(MetricKind::sbleu);
    EXPECT_EQ(c.smoothing, Smoothing::add_one);
    EXPECT_EQ(sentence_bleu(tokenize("a b"), seg("1", {{"a b", 1.0}}), c), 1.0);
    EXPECT_NEAR(sentence_bleu(tokenize("a b"), seg("1", {{"a c", 1.0}}), c), 0.5, 1e-15);
    EXPECT_EQ(sentence_bleu(TokenSequence{}, seg("1", {{"a c", 1.0}}), c), 0.0);
}

TEST(MacroSbleu, Examples) {
    MetricConfig c = cfg(MetricKind::sbleu);
    std::vector<Segment> segs{seg("1", {{"a b", 1.0}}), seg("2", {{"a c", 1.0}})};
    HypothesisSet both{{"1", tokenize("a b")}, {"2", tokenize("a b")}};
    EXPECT_NEAR(macro_sbleu(both, segs, c).score, 0.75, 1e-15);
    HypothesisSet one{{"2", tokenize("a b")}};
    EXPECT_EQ(macro_sbleu(one, segs, c).score, sentence_bleu(tokenize("a b"), segs[1], c));
    HypothesisSet mixed{{"1", tokenize("a b")}, {"2", tokenize("z")}};
    EXPECT_NEAR(macro_sbleu(mixed, segs, c).score, 0.5, 1e-15);
    EXPECT_THROW(macro_sbleu({}, segs, c), DataError);
}

TEST(SentenceBleu, UnsmoothedMatchesSingleSegmentCorpus) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 300; ++t) {
        Segment s{"1", {{"r", TokenSequence{oracle::random_words(rng, 1, 10, 4)}, 1.0, true}}};
        TokenSequence h{oracle::random_words(rng, 1, 10, 4)};
        MetricConfig c = cfg(MetricKind::sbleu);
        c.smoothing = Smoothing::none;
        auto corpus = corpus_bleu({{"1", h}}, std::vector<Segment>{s}, cfg(MetricKind::bleu));
        bool positive = std::all_of(corpus.precisions.begin(), corpus.precisions.end(), [](double p) { return p > 0; });
        if (positive) {
            ASSERT_EQ(sentence_bleu(h, s, c), corpus.score);
        }
    }
}

TEST(FilterReferences, ThresholdAndSingle) {
    // weights from a sample reference set with mixed ratings
    std::vector<Segment> segs{seg("imagine", {{"they were very disappointed!!!", 0.6},
                                              {"yes. luckily, the whole thing feels very much of the past now.", 0.8},
                                              {"na this is anything but a disappointment..", 0.6},
                                              {"they were belly rolling, filarious.", 0.4},
                                              {"your imagination is wrong, very wrong at that.", -0.1},
                                              {"the weather in russia is very cool.", -0.7}})};
    auto kept = filter_references(segs, 0.6);
    ASSERT_EQ(kept.segments[0].references.size(), 3u);
    // 0.6 appears twice in that set, 0.8 once
    std::vector<double> w;
    for (const auto &r : kept.segments[0].references)
        w.push_back(r.weight);
    EXPECT_EQ(w, (std::vector<double>{0.6, 0.8, 0.6}));

    auto all = filter_references(segs, -1.0);
    EXPECT_EQ(all.segments[0].references.size(), 6u);
    EXPECT_TRUE(all.without_positive.empty());

    EXPECT_THROW(filter_references(segs, 1.01), UsageError);
    EXPECT_THROW(filter_references(segs, -1.5), UsageError);

    auto single = keep_original_references(segs);
    ASSERT_EQ(single.segments[0].references.size(), 1u);
    EXPECT_EQ(single.segments[0].references[0].weight, 0.6);

    auto none = filter_references(segs, 0.9);
    EXPECT_TRUE(none.segments[0].references.empty());
    EXPECT_EQ(none.without_positive, std::vector<std::string>{"imagine"});
}

TEST(RefMode, ParseAndLabel) {
    EXPECT_EQ(RefMode::parse("all").label(), "all");
    EXPECT_EQ(RefMode::parse("single").label(), "single");
    EXPECT_EQ(RefMode::parse("threshold:0.6").label(), "w>=0.6");
    EXPECT_THROW(RefMode::parse("threshold:1.01"), UsageError);
    EXPECT_THROW(RefMode::parse("threshold:x"), UsageError);
    EXPECT_THROW(RefMode::parse("some"), UsageError);
}

TEST(CorpusBleu, EmptyReferenceSetAfterFilterIsScoredForBleu) {
    std::vector<Segment> segs{seg("1", {{"a b", 0.2}})};
    auto f = filter_references(segs, 0.5);
    auto r = corpus_bleu({{"1", tokenize("a b")}}, f.segments, cfg(MetricKind::bleu));
    EXPECT_EQ(r.score, 0.0);
    EXPECT_EQ(r.ref_length, 0u);
    EXPECT_THROW(corpus_dbleu({{"1", tokenize("a b")}}, f.segments, cfg(MetricKind::dbleu)), DataError);
}

// Property checks against the brute-force oracle on random corpora.
TEST(MetricProperties, MatchOracleAndInvariants) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> w(-1.0, 1.0);
    for (int trial = 0; trial < 150; ++trial) {
        std::vector<oracle::Item> corpus(static_cast<std::size_t>(5 + trial % 10));
        for (auto &item : corpus) {
            item.hyp = oracle::random_words(rng, 0, 8, 6);
            std::size_t j = 1 + rng() % 5;
            for (std::size_t k = 0; k < j; ++k)
                item.refs.push_back({oracle::random_words(rng, 1, 8, 6), w(rng)});
            item.refs[rng() % j].weight = 0.01 + 0.99 * std::abs(w(rng));
        }
        const std::size_t n = 1 + trial % 4;
        auto [hyps, segs] = oracle::to_library(corpus);
        MetricConfig b = cfg(MetricKind::bleu, n), d = cfg(MetricKind::dbleu, n);
        auto rb = corpus_bleu(hyps, segs, b);
        auto rd = corpus_dbleu(hyps, segs, d);
        ASSERT_NEAR(rb.score, oracle::bleu(corpus, n), 1e-12);
        ASSERT_NEAR(rd.score, oracle::dbleu(corpus, n), 1e-12);
        ASSERT_LE(rb.score, 1.0);
        ASSERT_LE(rd.score, 1.0);
        for (double p : rb.precisions) {
            ASSERT_GE(p, 0.0);
            ASSERT_LE(p, 1.0);
        }
        for (double p : rd.precisions)
            ASSERT_LE(p, 1.0 + 1e-15);

        // permutation invariance
        std::vector<Segment> shuffled = segs;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        ASSERT_NEAR(corpus_dbleu(hyps, shuffled, d).score, rd.score, 1e-12);
        ASSERT_NEAR(corpus_bleu(hyps, shuffled, b).score, rb.score, 1e-12);

        // unit weights reduce ΔBLEU to BLEU
        for (auto &s : segs)
            for (auto &r : s.references)
                r.weight = 1.0;
        ASSERT_EQ(corpus_dbleu(hyps, segs, d).score, rb.score);

        MetricConfig sc = cfg(MetricKind::sbleu, n);
        std::size_t i = 0;
        for (const auto &[id, h] : hyps) {
            ASSERT_NEAR(sentence_bleu(h, segs[i], sc), oracle::sbleu(corpus[i], n), 1e-12);
            ++i;
        }
    }
}
