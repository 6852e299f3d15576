#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "encaudit/heads.hpp"
#include "support.hpp"

using namespace encaudit;
using testing_support::ScratchDir;

namespace {

constexpr std::uint32_t kLayers = 3, kHeads = 4, kDim = 8;

std::vector<float> gaussian(Rng& rng, std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

// Samples whose noisy and clean word vectors are independent Gaussians and
// whose ablation records are filled by `ablate(sample, layer, head)`.
using Ablate = std::function<std::vector<float>(const HeadSample&, std::size_t, std::size_t, Rng&)>;

std::vector<HeadSample> make_samples(std::size_t n, std::uint64_t seed, const Ablate& ablate, bool with_clean = true) {
    Rng rng(seed);
    std::vector<HeadSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        HeadSample s;
        s.sentence_index = static_cast<std::uint32_t>(i);
        s.num_layers = kLayers;
        s.num_heads = kHeads;
        s.model_dim = kDim;
        s.noisy_word = gaussian(rng, (kLayers + 1) * kDim);
        if (with_clean) s.clean_word = gaussian(rng, (kLayers + 1) * kDim);
        for (std::size_t l = 0; l < kLayers; ++l)
            for (std::size_t h = 0; h < kHeads; ++h) {
                const auto v = ablate(s, l, h, rng);
                s.ablations.insert(s.ablations.end(), v.begin(), v.end());
            }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<float> to_vec(std::span<const float> s) { return {s.begin(), s.end()}; }

// Head `planted(l)` of encoder layer l is independent noise, the rest
// reproduce the reference state of representation layer l+1.
Ablate planted(std::function<std::size_t(std::size_t)> head_of, bool clean_reference) {
    return [=](const HeadSample& s, std::size_t l, std::size_t h, Rng& rng) {
        if (h == head_of(l)) return gaussian(rng, kDim);
        return to_vec(clean_reference ? s.clean(l + 1) : s.noisy(l + 1));
    };
}

}  // namespace

TEST(InfluenceRow, AblationEqualToStateGivesZero) {
    auto samples = make_samples(20, 1, planted([](std::size_t) { return kHeads; }, false));
    for (std::size_t l = 1; l <= kLayers; ++l)
        for (double v : influence_row(samples, l)) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(InfluenceRow, OrthogonalRotationGivesZero) {
    Rng rot_rng(2);
    const FeatureMatrix q = testing_support::random_orthogonal(rot_rng, kDim);
    auto samples = make_samples(20, 3, [&](const HeadSample& s, std::size_t l, std::size_t, Rng&) {
        const auto y = s.noisy(l + 1);
        std::vector<float> out(kDim, 0.0f);
        for (std::size_t c = 0; c < kDim; ++c)
            for (std::size_t k = 0; k < kDim; ++k) out[c] += static_cast<float>(y[k] * q(Eigen::Index(k), Eigen::Index(c)));
        return out;
    });
    for (std::size_t l = 1; l <= kLayers; ++l)
        for (double v : influence_row(samples, l)) EXPECT_NEAR(v, 0.0, 1e-6);  // float storage of the rotated rows
}

TEST(InfluenceRow, PlantedNoiseHeadIsArgmax) {
    auto samples = make_samples(32, 4, planted([](std::size_t) { return 2; }, false));
    for (std::size_t l = 1; l <= kLayers; ++l) {
        const auto row = influence_row(samples, l);
        EXPECT_EQ(argmax_head(row), 2u);
        for (double v : row) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(InfluenceRow, BatchAndLayerChecks) {
    auto samples = make_samples(5, 5, planted([](std::size_t) { return 0; }, false));
    EXPECT_THROW(influence_row(std::span(samples).first(1), 1), DatasetError);
    EXPECT_THROW(influence_row(samples, 0), IndexError);
    EXPECT_THROW(influence_row(samples, kLayers + 1), IndexError);
}

TEST(RobustnessRow, AblationEqualToCleanGivesZeros) {
    auto samples = make_samples(20, 6, planted([](std::size_t) { return kHeads; }, true));
    for (std::size_t l = 1; l <= kLayers; ++l)
        for (double v : robustness_row(samples, l)) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(RobustnessRow, PlantedNoiseHeadIsArgmax) {
    auto samples = make_samples(32, 7, planted([](std::size_t) { return 1; }, true));
    for (std::size_t l = 1; l <= kLayers; ++l) EXPECT_EQ(argmax_head(robustness_row(samples, l)), 1u);
}

TEST(RobustnessRow, SelfPairingEqualsInfluence) {
    auto samples = make_samples(24, 8, planted([](std::size_t l) { return l % kHeads; }, false));
    for (auto& s : samples) s.clean_word = s.noisy_word;
    for (std::size_t l = 1; l <= kLayers; ++l) EXPECT_EQ(robustness_row(samples, l), influence_row(samples, l));
}

TEST(RobustnessRow, MissingCleanIsSelectionError) {
    auto samples = make_samples(4, 9, planted([](std::size_t) { return 0; }, false), false);
    EXPECT_THROW(robustness_row(samples, 1), SelectionError);
}

TEST(SelectHeads, ArgmaxAndTieRule) {
    EXPECT_EQ(argmax_head({0.1, 0.9, 0.3}), 1u);
    EXPECT_EQ(argmax_head({0.4, 0.4, 0.4}), 0u);
    EXPECT_EQ(argmax_head({0.2, 0.7, 0.7}), 1u);
    const auto sel = select_heads({{0.1, 0.9, 0.3}, {0.5, 0.5, 0.5}});
    EXPECT_EQ(sel.heads, (std::vector<std::uint32_t>{1, 0}));
    EXPECT_THROW(select_heads(std::vector<std::vector<double>>{std::vector<double>{}}), InvalidInput);
}

TEST(SelectHeads, PlantedIndicesAtEveryLayer) {
    const auto head_of = [](std::size_t l) { return (l * 3 + 1) % kHeads; };
    auto samples = make_samples(40, 10, planted(head_of, true));
    const auto sel = select_heads(score_table(samples, HeadKind::Robustness));
    ASSERT_EQ(sel.heads.size(), kLayers);
    for (std::size_t l = 0; l < kLayers; ++l) EXPECT_EQ(sel.heads[l], head_of(l)) << "layer " << l + 1;
}

TEST(Agreement, IdenticalTablesAgreeEverywhere) {
    auto samples = make_samples(50, 11, planted([](std::size_t l) { return l; }, false));
    for (auto& s : samples) s.clean_word = s.noisy_word;
    const auto rep = agreement_accuracy(samples, 16);
    EXPECT_EQ(rep.n_batches, 4u);  // 16, 16, 16 and a final batch of 2
    for (double a : rep.accuracy) EXPECT_DOUBLE_EQ(a, 1.0);
}

TEST(Agreement, DualPlantedHeadsNeverAgree) {
    // Head a reproduces the clean state (far from noisy), head b the noisy
    // state (far from clean): influence picks a, robustness picks b.
    const auto a = [](std::size_t l) { return l % kHeads; };
    const auto b = [](std::size_t l) { return (l + 2) % kHeads; };
    auto samples = make_samples(64, 12, [&](const HeadSample& s, std::size_t l, std::size_t h, Rng&) {
        const auto n = s.noisy(l + 1), c = s.clean(l + 1);
        std::vector<float> out(kDim);
        for (std::size_t k = 0; k < kDim; ++k) {
            if (h == a(l)) out[k] = c[k];
            else if (h == b(l)) out[k] = n[k];
            else out[k] = n[k] + c[k];
        }
        return out;
    });
    const auto rep = agreement_accuracy(samples, 16);
    EXPECT_EQ(rep.n_batches, 4u);
    for (std::size_t bi = 0; bi < rep.n_batches; ++bi)
        for (std::size_t l = 0; l < kLayers; ++l) {
            EXPECT_EQ(argmax_head(rep.influence[bi].scores[l]), a(l));
            EXPECT_EQ(argmax_head(rep.robustness[bi].scores[l]), b(l));
        }
    for (double acc : rep.accuracy) EXPECT_DOUBLE_EQ(acc, 0.0);
}

TEST(Agreement, SingleBatchIsZeroOrOne) {
    auto samples = make_samples(10, 13, planted([](std::size_t l) { return l; }, true));
    const auto rep = agreement_accuracy(samples, 256);
    EXPECT_EQ(rep.n_batches, 1u);
    for (double acc : rep.accuracy) EXPECT_TRUE(acc == 0.0 || acc == 1.0);
}

TEST(Agreement, ShortFinalBatchHandling) {
    auto samples = make_samples(9, 14, planted([](std::size_t) { return 0; }, true));
    EXPECT_EQ(agreement_accuracy(samples, 4).n_batches, 2u);                        // 4, 4, then 1 dropped
    EXPECT_EQ(agreement_accuracy(std::span(samples).first(8), 3).n_batches, 3u);  // 3, 3, 2 kept
    EXPECT_THROW(agreement_accuracy(std::span(samples).first(1), 4), DatasetError);
    EXPECT_THROW(agreement_accuracy(samples, 1), ConfigError);
}

TEST(Agreement, Deterministic) {
    auto samples = make_samples(40, 15, planted([](std::size_t l) { return l; }, true));
    const auto a = agreement_accuracy(samples, 8), b = agreement_accuracy(samples, 8);
    EXPECT_EQ(a.accuracy, b.accuracy);
    for (std::size_t i = 0; i < a.n_batches; ++i) EXPECT_EQ(a.robustness[i].scores, b.robustness[i].scores);
}

TEST(HeadProperties, ScalingLeavesSelectionUnchanged) {
    auto samples = make_samples(30, 16, planted([](std::size_t l) { return (l + 1) % kHeads; }, true));
    const auto scaled_by = [&](float k) {
        auto out = samples;
        for (auto& s : out) {
            for (auto& v : s.ablations) v *= k;
            for (auto& v : s.noisy_word) v *= k;
            for (auto& v : s.clean_word) v *= k;
        }
        return out;
    };
    // a power of two scales the stored floats exactly, so the tables agree
    // to double rounding; any other factor must at least keep the argmax
    const auto exact = scaled_by(-4.0f), rounded = scaled_by(-3.5f);
    for (auto kind : {HeadKind::Influential, HeadKind::Robustness}) {
        const auto t1 = score_table(samples, kind), t2 = score_table(exact, kind);
        EXPECT_EQ(select_heads(t1).heads, select_heads(t2).heads);
        EXPECT_EQ(select_heads(t1).heads, select_heads(score_table(rounded, kind)).heads);
        for (std::size_t l = 0; l < kLayers; ++l)
            for (std::size_t h = 0; h < kHeads; ++h) EXPECT_NEAR(t1.scores[l][h], t2.scores[l][h], 1e-9);
    }
}

TEST(HeadProperties, PermutingHeadsPermutesRows) {
    auto samples = make_samples(30, 17, planted([](std::size_t l) { return l; }, true));
    const std::vector<std::size_t> perm = {2, 0, 3, 1};  // new head h holds old head perm[h]
    auto permuted = samples;
    for (auto& s : permuted)
        for (std::size_t l = 0; l < kLayers; ++l)
            for (std::size_t h = 0; h < kHeads; ++h) {
                const auto src = samples[s.sentence_index].ablation(l, perm[h]);
                std::copy(src.begin(), src.end(), s.ablations.begin() + std::ptrdiff_t((l * kHeads + h) * kDim));
            }
    const auto t1 = score_table(samples, HeadKind::Robustness), t2 = score_table(permuted, HeadKind::Robustness);
    for (std::size_t l = 0; l < kLayers; ++l)
        for (std::size_t h = 0; h < kHeads; ++h) EXPECT_EQ(t2.scores[l][h], t1.scores[l][perm[h]]);
}

TEST(HeadProperties, ScoresStayInUnitInterval) {
    auto samples = make_samples(12, 18, [](const HeadSample&, std::size_t, std::size_t, Rng& rng) {
        return gaussian(rng, kDim);
    });
    for (auto kind : {HeadKind::Influential, HeadKind::Robustness})
        for (const auto& row : score_table(samples, kind).scores)
            for (double v : row) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
}

namespace {

SentenceRecord ablated_record(std::uint32_t i, std::optional<std::uint32_t> target) {
    auto r = testing_support::make_record(i, 3, 2, 2, 4,
                                          [i](std::size_t l, std::size_t t, std::size_t c) {
                                              return float((i * 5 + l * 3 + t * 7 + c) % 11) - 5.0f;
                                          },
                                          target);
    if (target) r.ablations.assign(2 * 2 * 4, 0.5f);
    return r;
}

}  // namespace

TEST(LoadHeadSamples, DumpWithoutAblationsIsCapabilityError) {
    ScratchDir dir("heads");
    auto h = testing_support::make_header(2, 2, 4);
    h.sentence_count = 2;
    {
        DumpWriter w(dir / "plain.nmtd", h);
        for (std::uint32_t i = 0; i < 2; ++i)
            w.write(testing_support::make_record(i, 3, 2, 2, 4, [](auto, auto, auto) { return 1.0f; }, 1));
        w.finish();
    }
    EXPECT_THROW(load_head_samples(dir / "plain.nmtd", std::nullopt, nullptr), CapabilityError);
}

TEST(LoadHeadSamples, ReadsTargetsAndResolvesCleanWordFromPairs) {
    ScratchDir dir("heads");
    auto h = testing_support::make_header(2, 2, 4, false, true);
    h.sentence_count = 3;
    {
        DumpWriter noisy(dir / "noisy.nmtd", h), clean(dir / "clean.nmtd", h);
        for (std::uint32_t i = 0; i < 3; ++i) {
            noisy.write(ablated_record(i, i == 1 ? std::nullopt : std::optional<std::uint32_t>(2)));
            auto c = ablated_record(i + 10, 0);
            c.sentence_index = i;
            clean.write(c);
        }
        noisy.finish();
        clean.finish();
    }
    std::vector<NoisePair> pairs(3);
    for (auto& p : pairs) p.error_indices = {1};
    const auto samples = load_head_samples(dir / "noisy.nmtd", dir / "clean.nmtd", &pairs);
    ASSERT_EQ(samples.size(), 2u);  // sentence 1 has no target word
    EXPECT_EQ(samples[0].sentence_index, 0u);
    EXPECT_EQ(samples[1].sentence_index, 2u);
    const auto noisy_rec = ablated_record(2, 2);
    const auto clean_rec = ablated_record(12, 0);
    for (std::size_t l = 0; l <= 2; ++l) {
        EXPECT_EQ(to_vec(samples[1].noisy(l)), to_vec(noisy_rec.word_state(l, 2)));
        EXPECT_EQ(to_vec(samples[1].clean(l)), to_vec(clean_rec.word_state(l, 1)));
    }
    std::vector<NoisePair> short_pairs(1);
    EXPECT_THROW(load_head_samples(dir / "noisy.nmtd", dir / "clean.nmtd", &short_pairs), SelectionError);
}

TEST(MakeHeadSample, MisalignedCleanIsSelectionError) {
    const auto noisy = ablated_record(0, 1);
    const auto clean = ablated_record(1, 1);
    EXPECT_THROW(make_head_sample(noisy, &clean, 1u), SelectionError);
    const auto same = ablated_record(0, 1);
    EXPECT_THROW(make_head_sample(noisy, &same, 7u), SelectionError);
    auto bare = noisy;
    bare.ablations.clear();
    EXPECT_THROW(make_head_sample(bare, nullptr, std::nullopt), CapabilityError);
}
