#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "encaudit/attn_pos.hpp"
#include "support.hpp"

using namespace encaudit;
using testing_support::ScratchDir;

namespace {

MatrixRf random_stochastic(Rng& rng, std::size_t t) {
    MatrixRf m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double sum = 0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) sum += (m(r, c) = static_cast<float>(rng.uniform01() + 1e-3));
        m.row(r) /= static_cast<float>(sum);
    }
    return m;
}

std::vector<WordSpan> random_spans(Rng& rng, std::uint32_t t) {
    std::vector<WordSpan> spans;
    std::uint32_t start = 0;
    while (start < t) {
        const auto len = std::min<std::uint32_t>(t - start, 1 + static_cast<std::uint32_t>(rng.uniform_index(3)));
        spans.push_back({start, start + len});
        start += len;
    }
    return spans;
}

TaggedSentence tagged(const std::string& id, std::vector<PosTag> tags) {
    TaggedSentence s;
    s.id = id;
    s.tags = std::move(tags);
    for (std::size_t i = 0; i < s.tags.size(); ++i) s.words.push_back("w" + std::to_string(i));
    return s;
}

NoisePair pair_for(const std::string& id, std::uint32_t error_word) {
    NoisePair p;
    p.id = id;
    p.error_indices = {error_word};
    return p;
}

// One-token-per-word record whose attention in layer l, head h is given by
// `row(l, h, source, target)`.
SentenceRecord attn_record(std::uint32_t index, std::uint32_t words, std::uint32_t layers, std::uint32_t heads,
                           const std::function<float(std::size_t, std::size_t, std::size_t, std::size_t)>& row) {
    auto r = testing_support::make_record(index, words, layers, heads, 4, [](auto, auto, auto) { return 0.0f; });
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < words; ++s)
                for (std::size_t t = 0; t < words; ++t) r.attentions.push_back(row(l, h, s, t));
    return r;
}

double layer_sum(const PosProfile& p, std::size_t l) { return std::accumulate(p.mean[l].begin(), p.mean[l].end(), 0.0); }

std::size_t column(const PosProfile& p, PosTag t) {
    return static_cast<std::size_t>(std::find(p.tags.begin(), p.tags.end(), t) - p.tags.begin());
}

}  // namespace

TEST(GroupAttention, SingleTokenWordsReturnTheRow) {
    Rng rng(1);
    const auto m = random_stochastic(rng, 6);
    std::vector<WordSpan> spans;
    for (std::uint32_t i = 0; i < 6; ++i) spans.push_back({i, i + 1});
    for (std::size_t w = 0; w < 6; ++w) {
        const auto g = group_attention(m, spans, w);
        for (std::size_t c = 0; c < 6; ++c) EXPECT_DOUBLE_EQ(g[c], double(m(Eigen::Index(w), Eigen::Index(c))));
    }
}

TEST(GroupAttention, HandComputedSubwordExample) {
    MatrixRf m(3, 3);
    m << 1.0f, 0.0f, 0.0f, 0.2f, 0.3f, 0.5f, 0.4f, 0.1f, 0.5f;
    const auto g = group_attention(m, {{0, 1}, {1, 3}}, 1);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_NEAR(g[0], 0.3, 1e-7);
    EXPECT_NEAR(g[1], 0.7, 1e-7);
}

TEST(GroupAttention, RandomStochasticInputsSumToOne) {
    Rng rng(2);
    for (int i = 0; i < 300; ++i) {
        const auto t = 1 + static_cast<std::uint32_t>(rng.uniform_index(20));
        const auto m = random_stochastic(rng, t);
        const auto spans = random_spans(rng, t);
        const auto g = group_attention(m, spans, rng.uniform_index(spans.size()));
        EXPECT_NEAR(std::accumulate(g.begin(), g.end(), 0.0), 1.0, 1e-5);
        for (double v : g) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0 + 1e-6);
        }
    }
}

TEST(GroupAttention, InvalidSpansAreIndexErrors) {
    const MatrixRf m = MatrixRf::Constant(3, 3, 1.0f / 3.0f);
    EXPECT_THROW(group_attention(m, {{0, 1}, {2, 3}}, 0), IndexError);
    EXPECT_THROW(group_attention(m, {{0, 2}, {1, 3}}, 0), IndexError);
    EXPECT_THROW(group_attention(m, {{0, 1}, {1, 4}}, 0), IndexError);
    EXPECT_THROW(group_attention(m, {{0, 3}}, 1), IndexError);
    EXPECT_THROW(group_attention(MatrixRf::Zero(2, 3), {{0, 3}}, 0), ShapeMismatch);
}

TEST(TopTags, FrequencyOrderWithOtherExcluded) {
    std::vector<TaggedSentence> corpus = {
        tagged("a", {PosTag::NOUN, PosTag::NOUN, PosTag::VERB, PosTag::OTHER, PosTag::OTHER, PosTag::OTHER}),
        tagged("b", {PosTag::DET, PosTag::NOUN, PosTag::VERB, PosTag::ADJ})};
    EXPECT_EQ(top_tags(corpus, 10), (std::vector<PosTag>{PosTag::NOUN, PosTag::VERB, PosTag::ADJ, PosTag::DET}));
    EXPECT_EQ(top_tags(corpus, 2), (std::vector<PosTag>{PosTag::NOUN, PosTag::VERB}));
}

TEST(PosProfile, AllNounCorpusSplitsIntoNounAndSelf) {
    Rng rng(3);
    std::vector<TaggedSentence> corpus;
    std::vector<NoisePair> pairs;
    std::vector<SentenceRecord> records;
    for (std::uint32_t i = 0; i < 20; ++i) {
        const auto words = 2 + static_cast<std::uint32_t>(rng.uniform_index(6));
        const auto err = static_cast<std::uint32_t>(rng.uniform_index(words));
        std::vector<PosTag> tags(words, PosTag::NOUN);
        tags[err] = PosTag::DET;
        corpus.push_back(tagged("s" + std::to_string(i), tags));
        pairs.push_back(pair_for("s" + std::to_string(i), err));
        std::vector<MatrixRf> mats;
        for (int k = 0; k < 4; ++k) mats.push_back(random_stochastic(rng, words));
        records.push_back(attn_record(i, words, 2, 2, [&](auto l, auto h, auto s, auto t) {
            return mats[l * 2 + h](Eigen::Index(s), Eigen::Index(t));
        }));
    }
    const auto p = pos_profile(records, pairs, corpus, {HeadKind::Robustness, {1, 0}});
    EXPECT_EQ(p.n_sentences, 20u);
    for (std::size_t l = 0; l < 2; ++l) {
        EXPECT_NEAR(p.mean[l][column(p, PosTag::NOUN)] + p.mean[l][column(p, PosTag::DET)], 1.0, 1e-4);
        EXPECT_NEAR(layer_sum(p, l), 1.0, 1e-4);
    }
}

TEST(PosProfile, HandBuiltSentenceGivesExactValues) {
    // Words: DET NOUN VERB NOUN, error word 1; the selected heads are 1 in
    // layer 0 and 0 in layer 1. Every other head attends uniformly.
    const std::vector<std::vector<float>> rows = {{0.1f, 0.2f, 0.3f, 0.4f}, {0.5f, 0.0f, 0.25f, 0.25f}};
    const auto r = attn_record(0, 4, 2, 2, [&](auto l, auto h, auto s, auto t) {
        const bool selected = (l == 0 && h == 1) || (l == 1 && h == 0);
        if (selected && s == 1) return rows[l][t];
        return 0.25f;
    });
    const std::vector<TaggedSentence> corpus = {tagged("x", {PosTag::DET, PosTag::NOUN, PosTag::VERB, PosTag::NOUN})};
    const std::vector<NoisePair> pairs = {pair_for("x", 1)};
    const HeadSelection sel{HeadKind::Robustness, {1, 0}};
    const auto p = pos_profile(std::span(&r, 1), pairs, corpus, sel);
    ASSERT_EQ(p.tags, (std::vector<PosTag>{PosTag::NOUN, PosTag::DET, PosTag::VERB, PosTag::OTHER}));
    const std::vector<std::vector<double>> expect = {{0.2 + 0.4, 0.1, 0.3, 0.0}, {0.0 + 0.25, 0.5, 0.25, 0.0}};
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(p.mean[l][c], expect[l][c], 1e-7) << l << "," << c;
    EXPECT_EQ(p.n_words[0], (std::vector<std::size_t>{2, 1, 1, 0}));
    // min-max over the whole grid: min 0, max 0.6
    EXPECT_NEAR(p.normalized[0][0], 1.0, 1e-9);
    EXPECT_NEAR(p.normalized[1][1], 0.5 / 0.6, 1e-6);
    EXPECT_NEAR(p.normalized[0][3], 0.0, 1e-9);

    PosProfileOptions opts;
    opts.exclude_self = true;
    const auto q = pos_profile(std::span(&r, 1), pairs, corpus, sel, opts);
    // self mass removed, the remainder rescaled to 1
    EXPECT_NEAR(q.mean[0][0], 0.4 / 0.8, 1e-6);
    EXPECT_NEAR(q.mean[0][1], 0.1 / 0.8, 1e-6);
    EXPECT_NEAR(q.mean[0][2], 0.3 / 0.8, 1e-6);
    EXPECT_NEAR(q.mean[1][0], 0.25, 1e-6);
    EXPECT_NEAR(q.mean[1][1], 0.5, 1e-6);
    EXPECT_EQ(q.n_words[0], (std::vector<std::size_t>{1, 1, 1, 0}));
    for (std::size_t l = 0; l < 2; ++l) EXPECT_NEAR(layer_sum(q, l), 1.0, 1e-6);
}

TEST(PosProfile, RareTagsFoldIntoOther) {
    const std::vector<TaggedSentence> corpus = {
        tagged("x", {PosTag::NOUN, PosTag::NOUN, PosTag::VERB, PosTag::ADJ}),
    };
    const auto r = attn_record(0, 4, 1, 1, [](auto, auto, auto, auto t) { return float(t + 1) / 10.0f; });
    PosProfileOptions opts;
    opts.top_k = 1;
    const auto p = pos_profile(std::span(&r, 1), {pair_for("x", 0)}, corpus, {HeadKind::Robustness, {0}}, opts);
    ASSERT_EQ(p.tags, (std::vector<PosTag>{PosTag::NOUN, PosTag::OTHER}));
    EXPECT_NEAR(p.mean[0][0], 0.3, 1e-6);
    EXPECT_NEAR(p.mean[0][1], 0.7, 1e-6);
    EXPECT_EQ(p.n_words[0], (std::vector<std::size_t>{2, 2}));
}

TEST(PosProfile, SentenceOrderDoesNotMatter) {
    Rng rng(4);
    std::vector<TaggedSentence> corpus;
    std::vector<NoisePair> pairs;
    std::vector<SentenceRecord> records;
    const std::vector<PosTag> pool = {PosTag::NOUN, PosTag::VERB, PosTag::DET, PosTag::ADP, PosTag::ADJ};
    for (std::uint32_t i = 0; i < 12; ++i) {
        const auto words = 3 + static_cast<std::uint32_t>(rng.uniform_index(4));
        std::vector<PosTag> tags;
        for (std::uint32_t w = 0; w < words; ++w) tags.push_back(pool[rng.uniform_index(pool.size())]);
        corpus.push_back(tagged("s" + std::to_string(i), tags));
        pairs.push_back(pair_for("s" + std::to_string(i), static_cast<std::uint32_t>(rng.uniform_index(words))));
        const auto m = random_stochastic(rng, words);
        records.push_back(attn_record(i, words, 1, 1, [&](auto, auto, auto s, auto t) {
            return m(Eigen::Index(s), Eigen::Index(t));
        }));
    }
    const HeadSelection sel{HeadKind::Robustness, {0}};
    const auto a = pos_profile(records, pairs, corpus, sel);
    std::reverse(records.begin(), records.end());
    std::rotate(corpus.begin(), corpus.begin() + 5, corpus.end());
    const auto b = pos_profile(records, pairs, corpus, sel);
    ASSERT_EQ(a.tags, b.tags);
    for (std::size_t c = 0; c < a.tags.size(); ++c) EXPECT_NEAR(a.mean[0][c], b.mean[0][c], 1e-12);
    EXPECT_EQ(a.n_words, b.n_words);
    for (const auto& row : a.mean)
        for (double v : row) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
}

TEST(PosProfile, ErrorsAndSkips) {
    const std::vector<TaggedSentence> corpus = {tagged("x", {PosTag::NOUN, PosTag::VERB})};
    auto r = attn_record(0, 2, 1, 1, [](auto, auto, auto, auto) { return 0.5f; });
    const HeadSelection sel{HeadKind::Robustness, {0}};

    auto bare = r;
    bare.attentions.clear();
    EXPECT_THROW(pos_profile(std::span(&bare, 1), {pair_for("x", 0)}, corpus, sel), CapabilityError);
    EXPECT_THROW(pos_profile(std::span(&r, 1), {pair_for("x", 0)}, corpus, {HeadKind::Robustness, {0, 0}}),
                 InvalidInput);
    EXPECT_THROW(pos_profile(std::span(&r, 1), {pair_for("y", 0)}, corpus, sel), SelectionError);
    EXPECT_THROW(pos_profile(std::span(&r, 1), {}, corpus, sel), SelectionError);
    // a pair without a changed position contributes nothing
    NoisePair unchanged;
    unchanged.id = "x";
    EXPECT_THROW(pos_profile(std::span(&r, 1), {unchanged}, corpus, sel), DatasetError);
}

TEST(PosProfile, DumpWithoutAttentionIsCapabilityError) {
    ScratchDir dir("attnpos");
    auto h = testing_support::make_header(1, 1, 4);
    h.sentence_count = 1;
    {
        DumpWriter w(dir / "d.nmtd", h);
        w.write(testing_support::make_record(0, 2, 1, 1, 4, [](auto, auto, auto) { return 0.0f; }, 0));
        w.finish();
    }
    const std::vector<TaggedSentence> corpus = {tagged("x", {PosTag::NOUN, PosTag::VERB})};
    EXPECT_THROW(pos_profile(dir / "d.nmtd", {pair_for("x", 0)}, corpus, {HeadKind::Robustness, {0}}),
                 CapabilityError);
}
