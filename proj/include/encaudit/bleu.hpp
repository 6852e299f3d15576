#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "encaudit/errors.hpp"

namespace encaudit {

namespace detail {

inline std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& words, std::size_t n) {
    std::map<std::vector<std::string>, int> counts;
    if (words.size() < n) return counts;
    for (std::size_t i = 0; i + n <= words.size(); ++i)
        ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                          words.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

}  // namespace detail

// Unsmoothed sentence BLEU: geometric mean of clipped n-gram precisions
// over the orders the hypothesis is long enough to have, times the brevity
// penalty min(1, exp(1 - |ref| / |hyp|)). A zero precision gives 0.
inline double sentence_bleu(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference,
                            std::size_t max_order = 4) {
    if (reference.empty()) throw InvalidInput("sentence_bleu: empty reference");
    if (max_order < 1) throw InvalidInput("sentence_bleu: max_order must be >= 1");
    if (hypothesis.empty()) return 0.0;

    double log_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= max_order && n <= hypothesis.size(); ++n) {
        const auto hyp = detail::ngram_counts(hypothesis, n);
        const auto ref = detail::ngram_counts(reference, n);
        int matched = 0, total = 0;
        for (const auto& [gram, count] : hyp) {
            total += count;
            auto it = ref.find(gram);
            if (it != ref.end()) matched += std::min(count, it->second);
        }
        if (matched == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
        ++orders;
    }

    const double h = static_cast<double>(hypothesis.size()), r = static_cast<double>(reference.size());
    const double brevity = h >= r ? 1.0 : std::exp(1.0 - r / h);
    return brevity * std::exp(log_sum / static_cast<double>(orders));
}

}  // namespace encaudit
