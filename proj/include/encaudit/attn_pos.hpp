#pragma once

// Word-level attention from the error word, bucketed by POS tag.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "encaudit/activation_store.hpp"
#include "encaudit/corpus.hpp"
#include "encaudit/encoder.hpp"
#include "encaudit/errors.hpp"
#include "encaudit/heads.hpp"

namespace encaudit {

// Mean over the source word's token rows, then sum over each target
// word's token columns. Row-stochastic input gives a row summing to 1.
template <typename Derived>
std::vector<double> group_attention(const Eigen::MatrixBase<Derived>& attn, const std::vector<WordSpan>& spans,
                                    std::size_t source_word) {
    const auto t = static_cast<std::uint32_t>(attn.rows());
    if (attn.cols() != attn.rows()) throw ShapeMismatch("attention matrix is not square");
    if (!spans_partition(spans, t)) throw IndexError("word spans do not partition the attention matrix");
    if (source_word >= spans.size()) throw IndexError("source word " + std::to_string(source_word) + " outside sentence");

    const auto& src = spans[source_word];
    std::vector<double> token_mass(t, 0.0);
    for (std::uint32_t r = src.start; r < src.end; ++r)
        for (std::uint32_t c = 0; c < t; ++c) token_mass[c] += static_cast<double>(attn(r, c));
    const double rows = static_cast<double>(src.end - src.start);

    std::vector<double> grouped(spans.size(), 0.0);
    for (std::size_t w = 0; w < spans.size(); ++w) {
        for (std::uint32_t c = spans[w].start; c < spans[w].end; ++c) grouped[w] += token_mass[c];
        grouped[w] /= rows;
    }
    return grouped;
}

struct PosProfile {
    std::vector<PosTag> tags;  // top-k tags by corpus frequency, then OTHER
    std::vector<std::uint32_t> selected_heads;  // per representation layer 1..L
    std::vector<std::vector<double>> mean;        // [layer-1][tag]
    std::vector<std::vector<double>> normalized;  // min-max over the whole grid
    std::vector<std::vector<std::size_t>> n_words;  // words of each tag attended to
    std::size_t n_sentences = 0;
};

struct PosProfileOptions {
    std::size_t top_k = 10;
    bool exclude_self = false;
};

// Tags ranked by frequency over `corpus` (ties by tag order), OTHER excluded.
inline std::vector<PosTag> top_tags(const std::vector<TaggedSentence>& corpus, std::size_t k) {
    std::array<std::size_t, kPosTagNames.size()> counts{};
    for (const auto& s : corpus)
        for (auto t : s.tags) ++counts[static_cast<std::size_t>(t)];
    std::vector<PosTag> ranked;
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (static_cast<PosTag>(i) != PosTag::OTHER && counts[i] > 0) ranked.push_back(static_cast<PosTag>(i));
    std::stable_sort(ranked.begin(), ranked.end(), [&](PosTag a, PosTag b) {
        return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

class PosProfileBuilder {
  public:
    PosProfileBuilder(const std::vector<NoisePair>& pairs, const std::vector<TaggedSentence>& corpus,
                      HeadSelection selection, PosProfileOptions options)
        : pairs_(pairs), selection_(std::move(selection)), options_(options) {
        for (const auto& s : corpus) by_id_.emplace(s.id, &s);
        profile_.tags = top_tags(corpus, options_.top_k);
        profile_.tags.push_back(PosTag::OTHER);
        for (std::size_t i = 0; i < profile_.tags.size(); ++i) column_[static_cast<std::size_t>(profile_.tags[i])] = i;
        profile_.selected_heads = selection_.heads;
        const std::size_t layers = selection_.heads.size();
        mass_.assign(layers, std::vector<double>(profile_.tags.size(), 0.0));
        profile_.n_words.assign(layers, std::vector<std::size_t>(profile_.tags.size(), 0));
    }

    void add(const SentenceRecord& r) {
        if (r.attentions.empty())
            throw CapabilityError("sentence " + std::to_string(r.sentence_index) + " has no attentions");
        if (selection_.heads.size() != r.num_layers)
            throw InvalidInput("head selection covers " + std::to_string(selection_.heads.size()) + " layers, dump has " +
                               std::to_string(r.num_layers));
        if (r.sentence_index >= pairs_.size())
            throw SelectionError("no noise pair for sentence " + std::to_string(r.sentence_index));
        const auto& pair = pairs_[r.sentence_index];
        const auto source = pair.target_word();
        if (!source) return;
        auto it = by_id_.find(pair.id);
        if (it == by_id_.end()) throw SelectionError("sentence id " + pair.id + " missing from the tagged corpus");
        const auto& tags = it->second->tags;
        if (tags.size() != r.word_count())
            throw SelectionError("sentence " + pair.id + ": tags and dump word counts differ");

        std::vector<std::vector<double>> contribution(r.num_layers, std::vector<double>(profile_.tags.size(), 0.0));
        for (std::size_t l = 0; l < r.num_layers; ++l) {
            const auto head = selection_.heads[l];
            if (head >= r.num_heads) throw IndexError("selected head outside the model");
            const auto grouped = group_attention(r.attention(l, head), r.word_spans, *source);
            double kept = 0.0;
            for (std::size_t w = 0; w < grouped.size(); ++w) {
                if (options_.exclude_self && w == *source) continue;
                contribution[l][column_for(tags[w])] += grouped[w];
                kept += grouped[w];
            }
            // with the self bucket dropped the remaining mass is rescaled to 1
            if (options_.exclude_self) {
                if (kept <= 0.0) return;
                for (auto& v : contribution[l]) v /= kept;
            }
        }
        for (std::size_t l = 0; l < r.num_layers; ++l) {
            for (std::size_t c = 0; c < profile_.tags.size(); ++c) mass_[l][c] += contribution[l][c];
            for (std::size_t w = 0; w < tags.size(); ++w) {
                if (options_.exclude_self && w == *source) continue;
                ++profile_.n_words[l][column_for(tags[w])];
            }
        }
        ++profile_.n_sentences;
    }

    PosProfile finish() {
        if (profile_.n_sentences == 0) throw DatasetError("no sentences contributed to the POS profile");
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        profile_.mean = mass_;
        for (auto& row : profile_.mean)
            for (auto& v : row) {
                v /= static_cast<double>(profile_.n_sentences);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        profile_.normalized = profile_.mean;
        for (auto& row : profile_.normalized)
            for (auto& v : row) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        return profile_;
    }

  private:
    std::size_t column_for(PosTag tag) const {
        auto it = column_.find(static_cast<std::size_t>(tag));
        return it == column_.end() ? profile_.tags.size() - 1 : it->second;
    }

    const std::vector<NoisePair>& pairs_;
    HeadSelection selection_;
    PosProfileOptions options_;
    std::unordered_map<std::string, const TaggedSentence*> by_id_;
    std::map<std::size_t, std::size_t> column_;
    std::vector<std::vector<double>> mass_;
    PosProfile profile_;
};

inline PosProfile pos_profile(std::span<const SentenceRecord> records, const std::vector<NoisePair>& pairs,
                              const std::vector<TaggedSentence>& corpus, const HeadSelection& selection,
                              PosProfileOptions options = {}) {
    PosProfileBuilder builder(pairs, corpus, selection, options);
    for (const auto& r : records) builder.add(r);
    return builder.finish();
}

inline PosProfile pos_profile(const std::filesystem::path& noisy_dump, const std::vector<NoisePair>& pairs,
                              const std::vector<TaggedSentence>& corpus, const HeadSelection& selection,
                              PosProfileOptions options = {}) {
    DumpReader reader(noisy_dump);
    if (!reader.header().has_attention)
        throw CapabilityError(noisy_dump.string() + " was written without has_attention");
    PosProfileBuilder builder(pairs, corpus, selection, options);
    while (auto r = reader.next()) builder.add(*r);
    return builder.finish();
}

}  // namespace encaudit
