#pragma once

// Influential and Robustness head scores from head-ablation records.
//
// Layer convention: the score row for representation layer l (1..L)
// describes the heads of encoder layer l-1, whose ablation produced the
// layer-l state.
//
//   influence[l][h]  = 1 - CKA(ablated_h, noisy word at l)
//   robustness[l][h] = 1 - CKA(ablated_h, clean word at l)

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "encaudit/activation_store.hpp"
#include "encaudit/corpus.hpp"
#include "encaudit/errors.hpp"
#include "encaudit/similarity.hpp"

namespace encaudit {

enum class HeadKind { Influential, Robustness };

inline std::string_view to_string(HeadKind k) { return k == HeadKind::Influential ? "influential" : "robustness"; }

// The vectors of one sentence that head analysis needs.
struct HeadSample {
    std::uint32_t sentence_index = 0;
    std::uint32_t num_layers = 0, num_heads = 0, model_dim = 0;
    std::vector<float> ablations;   // L x H x d
    std::vector<float> noisy_word;  // (L+1) x d, target word of the noisy sentence
    std::vector<float> clean_word;  // (L+1) x d, clean form, empty without a clean dump

    std::span<const float> ablation(std::size_t layer, std::size_t head) const {
        return {ablations.data() + (layer * num_heads + head) * model_dim, model_dim};
    }
    std::span<const float> noisy(std::size_t layer) const { return {noisy_word.data() + layer * model_dim, model_dim}; }
    std::span<const float> clean(std::size_t layer) const { return {clean_word.data() + layer * model_dim, model_dim}; }
};

// `clean` may be null (influence only). `clean_word` is the clean form's
// word index in the clean sentence.
inline HeadSample make_head_sample(const SentenceRecord& noisy, const SentenceRecord* clean,
                                   std::optional<std::uint32_t> clean_word) {
    if (!noisy.target_word)
        throw CapabilityError("sentence " + std::to_string(noisy.sentence_index) + " has no target word");
    if (noisy.ablations.empty())
        throw CapabilityError("sentence " + std::to_string(noisy.sentence_index) + " has no ablation records");
    HeadSample s;
    s.sentence_index = noisy.sentence_index;
    s.num_layers = noisy.num_layers;
    s.num_heads = noisy.num_heads;
    s.model_dim = noisy.model_dim;
    s.ablations = noisy.ablations;
    for (std::size_t l = 0; l <= noisy.num_layers; ++l) {
        const auto v = noisy.word_state(l, *noisy.target_word);
        s.noisy_word.insert(s.noisy_word.end(), v.begin(), v.end());
    }
    if (clean) {
        if (clean->sentence_index != noisy.sentence_index)
            throw SelectionError("clean sentence " + std::to_string(clean->sentence_index) + " paired with noisy sentence " +
                                 std::to_string(noisy.sentence_index));
        if (clean->num_layers != noisy.num_layers || clean->model_dim != noisy.model_dim)
            throw SelectionError("clean and noisy dumps come from differently shaped models");
        const auto word = clean_word ? clean_word : clean->target_word;
        if (!word || *word >= clean->word_count())
            throw SelectionError("cannot resolve the clean word of sentence " + std::to_string(clean->sentence_index));
        for (std::size_t l = 0; l <= clean->num_layers; ++l) {
            const auto v = clean->word_state(l, *word);
            s.clean_word.insert(s.clean_word.end(), v.begin(), v.end());
        }
    }
    return s;
}

namespace detail {

template <typename Get>
inline FeatureMatrix stack_rows(std::span<const HeadSample> batch, std::size_t dim, Get get) {
    FeatureMatrix m(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto v = get(batch[i]);
        for (std::size_t c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v[c];
    }
    return m;
}

inline void check_batch(std::span<const HeadSample> batch, std::size_t layer) {
    if (batch.size() < 2) throw DatasetError("head scores need at least 2 sentences per batch");
    if (layer < 1 || layer > batch.front().num_layers)
        throw IndexError("head score layer " + std::to_string(layer) + " outside 1.." +
                         std::to_string(batch.front().num_layers));
}

template <typename Get>
inline std::vector<double> score_row(std::span<const HeadSample> batch, std::size_t layer, Get reference) {
    const std::size_t d = batch.front().model_dim;
    const FeatureMatrix y = stack_rows(batch, d, reference);
    std::vector<double> row(batch.front().num_heads);
    for (std::size_t h = 0; h < row.size(); ++h) {
        const FeatureMatrix x = stack_rows(batch, d, [&](const HeadSample& s) { return s.ablation(layer - 1, h); });
        row[h] = cka_distance(x, y);
    }
    return row;
}

}  // namespace detail

inline std::vector<double> influence_row(std::span<const HeadSample> batch, std::size_t layer) {
    detail::check_batch(batch, layer);
    return detail::score_row(batch, layer, [&](const HeadSample& s) { return s.noisy(layer); });
}

inline std::vector<double> robustness_row(std::span<const HeadSample> batch, std::size_t layer) {
    detail::check_batch(batch, layer);
    for (const auto& s : batch)
        if (s.clean_word.empty())
            throw SelectionError("sentence " + std::to_string(s.sentence_index) + " has no clean counterpart");
    return detail::score_row(batch, layer, [&](const HeadSample& s) { return s.clean(layer); });
}

struct HeadScoreTable {
    HeadKind kind = HeadKind::Influential;
    std::size_t batch_id = 0;
    std::vector<std::vector<double>> scores;  // scores[l-1][h] for representation layer l
};

inline HeadScoreTable score_table(std::span<const HeadSample> batch, HeadKind kind, std::size_t batch_id = 0) {
    if (batch.empty()) throw DatasetError("empty head batch");
    HeadScoreTable t{kind, batch_id, {}};
    for (std::size_t l = 1; l <= batch.front().num_layers; ++l)
        t.scores.push_back(kind == HeadKind::Influential ? influence_row(batch, l) : robustness_row(batch, l));
    return t;
}

// heads[l-1] = selected head of encoder layer l-1 for representation layer l.
struct HeadSelection {
    HeadKind kind = HeadKind::Robustness;
    std::vector<std::uint32_t> heads;
};

// Argmax per row, ties to the lowest head index.
inline std::uint32_t argmax_head(const std::vector<double>& row) {
    std::uint32_t best = 0;
    for (std::uint32_t h = 1; h < row.size(); ++h)
        if (row[h] > row[best]) best = h;
    return best;
}

inline HeadSelection select_heads(const std::vector<std::vector<double>>& rows, HeadKind kind = HeadKind::Robustness) {
    HeadSelection sel{kind, {}};
    for (const auto& row : rows) {
        if (row.empty()) throw InvalidInput("empty head score row");
        sel.heads.push_back(argmax_head(row));
    }
    return sel;
}

inline HeadSelection select_heads(const HeadScoreTable& table) { return select_heads(table.scores, table.kind); }

struct AgreementReport {
    std::vector<double> accuracy;  // accuracy[l-1] for representation layer l
    std::size_t n_batches = 0;
    std::size_t batch_size = 0;
    std::vector<HeadScoreTable> influence;   // per batch
    std::vector<HeadScoreTable> robustness;  // per batch
};

// Consecutive batches of `batch_size` sentences (a final batch shorter than
// 2 is dropped); accuracy per layer is the fraction of batches whose
// Influential and Robustness argmax heads coincide.
inline AgreementReport agreement_accuracy(std::span<const HeadSample> samples, std::size_t batch_size) {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (samples.size() < 2) throw DatasetError("agreement needs at least 2 usable sentences, got " + std::to_string(samples.size()));
    AgreementReport report;
    report.batch_size = batch_size;
    const std::size_t layers = samples.front().num_layers;
    std::vector<std::size_t> agree(layers, 0);
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, samples.size() - start);
        if (len < 2) break;
        const auto batch = samples.subspan(start, len);
        auto inf = score_table(batch, HeadKind::Influential, report.n_batches);
        auto rob = score_table(batch, HeadKind::Robustness, report.n_batches);
        for (std::size_t l = 0; l < layers; ++l)
            if (argmax_head(inf.scores[l]) == argmax_head(rob.scores[l])) ++agree[l];
        report.influence.push_back(std::move(inf));
        report.robustness.push_back(std::move(rob));
        ++report.n_batches;
    }
    for (auto a : agree) report.accuracy.push_back(static_cast<double>(a) / static_cast<double>(report.n_batches));
    return report;
}

// Reads both dumps in lockstep. Clean word indices come from the noise
// pairs (first changed position), indexed by sentence index.
inline std::vector<HeadSample> load_head_samples(const std::filesystem::path& noisy_dump,
                                                 const std::optional<std::filesystem::path>& clean_dump,
                                                 const std::vector<NoisePair>* pairs) {
    DumpReader noisy(noisy_dump);
    if (!noisy.header().has_ablations) throw CapabilityError(noisy_dump.string() + " was written without has_ablations");
    std::optional<DumpReader> clean;
    if (clean_dump) {
        clean.emplace(*clean_dump);
        if (clean->header().num_layers != noisy.header().num_layers ||
            clean->header().model_dim != noisy.header().model_dim ||
            clean->header().sentence_count != noisy.header().sentence_count)
            throw SelectionError("clean and noisy dumps are not aligned");
    }
    std::vector<HeadSample> samples;
    while (auto n = noisy.next()) {
        std::optional<SentenceRecord> c;
        if (clean) {
            c = clean->next();
            if (!c) throw SelectionError("clean dump ended early");
        }
        if (!n->target_word) continue;
        std::optional<std::uint32_t> clean_word;
        if (pairs) {
            if (n->sentence_index >= pairs->size())
                throw SelectionError("no noise pair for sentence " + std::to_string(n->sentence_index));
            clean_word = (*pairs)[n->sentence_index].target_word();
        }
        samples.push_back(make_head_sample(*n, c ? &*c : nullptr, clean_word));
    }
    return samples;
}

}  // namespace encaudit
