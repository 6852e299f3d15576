#pragma once

// Shared helpers for the test suite: scratch directories, independent
// reference implementations and hand-built dumps.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

#include "encaudit/activation_store.hpp"
#include "encaudit/corpus.hpp"
#include "encaudit/morpheus.hpp"
#include "encaudit/rng.hpp"

namespace testing_support {

using encaudit::FeatureMatrix;

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(ENCAUDIT_FIXTURE_DIR) / name;
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
  public:
    explicit ScratchDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("encaudit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline FeatureMatrix random_matrix(encaudit::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    FeatureMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

// Orthogonal matrix from the QR decomposition of a Gaussian matrix.
inline FeatureMatrix random_orthogonal(encaudit::Rng& rng, Eigen::Index d) {
    Eigen::HouseholderQR<FeatureMatrix> qr(random_matrix(rng, d, d));
    return qr.householderQ() * FeatureMatrix::Identity(d, d);
}

// CKA through the HSIC estimator on linear Gram matrices with explicit
// centering matrices: HSIC(K,L) = tr(KHLH)/(n-1)^2.
inline double hsic(const FeatureMatrix& k, const FeatureMatrix& l) {
    const auto n = k.rows();
    const FeatureMatrix h = FeatureMatrix::Identity(n, n) - FeatureMatrix::Constant(n, n, 1.0 / double(n));
    return (k * h * l * h).trace() / double((n - 1) * (n - 1));
}

inline double hsic_cka(const FeatureMatrix& x, const FeatureMatrix& y) {
    const FeatureMatrix k = x * x.transpose();
    const FeatureMatrix l = y * y.transpose();
    return hsic(k, l) / std::sqrt(hsic(k, k) * hsic(l, l));
}

// Record with a single-token-per-word layout and every hidden state set by
// `value(layer, token, dim)`.
inline encaudit::SentenceRecord make_record(std::uint32_t index, std::uint32_t words, std::uint32_t layers,
                                            std::uint32_t heads, std::uint32_t dim,
                                            const std::function<float(std::size_t, std::size_t, std::size_t)>& value,
                                            std::optional<std::uint32_t> target = std::nullopt) {
    encaudit::SentenceRecord r;
    r.sentence_index = index;
    r.token_count = words;
    for (std::uint32_t w = 0; w < words; ++w) r.word_spans.push_back({w, w + 1});
    r.target_word = target;
    r.num_layers = layers;
    r.num_heads = heads;
    r.model_dim = dim;
    for (std::size_t l = 0; l <= layers; ++l)
        for (std::size_t t = 0; t < words; ++t)
            for (std::size_t c = 0; c < dim; ++c) r.hidden_states.push_back(value(l, t, c));
    return r;
}

inline encaudit::DumpHeader make_header(std::uint32_t layers, std::uint32_t heads, std::uint32_t dim,
                                        bool attention = false, bool ablations = false) {
    encaudit::DumpHeader h;
    h.model_id = "test";
    h.num_layers = layers;
    h.num_heads = heads;
    h.model_dim = dim;
    h.has_attention = attention;
    h.has_ablations = ablations;
    return h;
}

// Uniform attention rows for every layer and head.
inline void add_uniform_attention(encaudit::SentenceRecord& r) {
    const std::size_t t = r.token_count;
    r.attentions.assign(std::size_t(r.num_layers) * r.num_heads * t * t, 1.0f / float(t));
}

// Greedy attack written out as nested evaluation: every choice sequence is
// enumerated and the sequence the greedy rule produces is returned.
inline std::vector<std::string> brute_force_greedy(const encaudit::TaggedSentence& s, encaudit::Scorer& scorer,
                                                   const encaudit::InflectionLexicon& lexicon) {
    std::vector<std::vector<std::string>> slots;
    for (std::size_t i = 0; i < s.words.size(); ++i) {
        std::set<std::string> forms;
        if (encaudit::is_inflectable(s.tags[i])) forms = lexicon.inflections(s.words[i], s.tags[i]);
        if (forms.empty()) forms.insert(s.words[i]);
        slots.emplace_back(forms.begin(), forms.end());
    }
    // Enumerate every full assignment and score it once.
    std::map<std::vector<std::string>, double> score_of;
    std::vector<std::string> cur(s.words.size());
    std::function<void(std::size_t)> walk = [&](std::size_t i) {
        if (i == slots.size()) {
            score_of[cur] = scorer.score(encaudit::join_words(cur));
            return;
        }
        for (const auto& f : slots[i]) {
            cur[i] = f;
            walk(i + 1);
        }
    };
    walk(0);
    // Replay the greedy rule against the table: at position i the prefix is
    // fixed and the suffix holds the original words.
    std::vector<std::string> chosen = s.words;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].size() < 2) continue;
        auto probe = chosen;
        double min_score = std::numeric_limits<double>::infinity();
        std::map<std::string, double> by_form;
        for (const auto& f : slots[i]) {
            probe[i] = f;
            by_form[f] = score_of.at(probe);
            min_score = std::min(min_score, by_form[f]);
        }
        std::string best = s.words[i];
        if (by_form.at(s.words[i]) != min_score)
            for (const auto& [f, sc] : by_form)
                if (sc == min_score) {
                    best = f;
                    break;
                }
        chosen[i] = best;
    }
    return chosen;
}

}  // namespace testing_support
