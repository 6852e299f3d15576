#pragma once

// Single-error corruption of tagged sentences: article and preposition
// substitution and noun-number flips.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "encaudit/corpus.hpp"
#include "encaudit/errors.hpp"
#include "encaudit/rng.hpp"

namespace encaudit {

struct WordLists {
    std::vector<std::string> articles;
    std::vector<std::string> prepositions;
};

inline WordLists word_lists(std::string_view language) {
    if (language == "en")
        return {{"a", "an", "the"},
                {"on", "in", "at", "from", "for", "under", "over", "with", "into", "during",
                 "until", "against", "among", "throughout", "of", "to", "by", "about", "like", "before",
                 "after", "since", "across", "behind", "but", "out", "up", "down", "off"}};
    if (language == "fr")
        return {{"la", "le", "un", "une", "les", "des"},
                {"à", "après", "avant", "avec", "chez", "contre", "dans", "de", "depuis", "derrière",
                 "devant", "durant", "en", "entre", "envers", "environ", "jusque", "malgré", "par", "parmi",
                 "pendant", "pour", "sans", "sauf", "selon", "sous", "suivant", "sur", "vers"}};
    throw ConfigError("no article/preposition lists for language '" + std::string(language) + "'");
}

// word -> distribution over replacements, entries kept in lexicographic
// order so sampling is reproducible.
class ReplacementTable {
  public:
    using Distribution = std::vector<std::pair<std::string, double>>;

    ReplacementTable() = default;

    explicit ReplacementTable(std::map<std::string, std::map<std::string, double>> raw) {
        for (auto& [word, dist] : raw) {
            Distribution d;
            double total = 0.0;
            for (auto& [rep, p] : dist) {
                if (!std::isfinite(p) || p < 0.0)
                    throw ConfigError("replacement table: negative probability for " + word + " -> " + rep);
                if (rep == word) {
                    if (p > 0.0) throw ConfigError("replacement table: self-replacement mass for '" + word + "'");
                    continue;
                }
                total += p;
                d.emplace_back(rep, p);
            }
            if (std::abs(total - 1.0) > 1e-9)
                throw ConfigError("replacement table: probabilities for '" + word + "' sum to " +
                                  std::to_string(total));
            table_.emplace(word, std::move(d));
        }
    }

    static ReplacementTable load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open replacement table " + path.string());
        try {
            return ReplacementTable(nlohmann::json::parse(in).get<std::map<std::string, std::map<std::string, double>>>());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed replacement table " + path.string() + ": " + e.what());
        }
    }

    // Uniform over the other members of each list.
    static ReplacementTable uniform(const std::vector<std::vector<std::string>>& groups) {
        std::map<std::string, std::map<std::string, double>> raw;
        for (const auto& group : groups) {
            std::set<std::string> members(group.begin(), group.end());
            if (members.size() < 2) continue;
            const double p = 1.0 / static_cast<double>(members.size() - 1);
            for (const auto& w : members)
                for (const auto& r : members)
                    if (r != w) raw[w][r] = p;
        }
        return ReplacementTable(std::move(raw));
    }

    const Distribution* find(const std::string& word) const {
        auto it = table_.find(word);
        return it == table_.end() ? nullptr : &it->second;
    }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [w, d] : table_)
            for (const auto& [r, p] : d) j[w][r] = p;
        return j;
    }

  private:
    std::map<std::string, Distribution> table_;
};

inline const std::string& sample(const ReplacementTable::Distribution& dist, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (const auto& [word, p] : dist) {
        acc += p;
        if (u < acc) return word;
    }
    for (auto it = dist.rbegin(); it != dist.rend(); ++it)
        if (it->second > 0.0) return it->first;
    return dist.back().first;
}

// Irregular singular/plural pairs consulted before the orthographic rules.
// File format: JSON object {"child": "children", ...} (singular -> plural).
class NumberLexicon {
  public:
    NumberLexicon() = default;

    explicit NumberLexicon(const std::map<std::string, std::string>& singular_to_plural) {
        for (const auto& [sg, pl] : singular_to_plural) {
            to_plural_[sg] = pl;
            to_singular_[pl] = sg;
        }
    }

    static NumberLexicon load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open number exception lexicon " + path.string());
        try {
            return NumberLexicon(nlohmann::json::parse(in).get<std::map<std::string, std::string>>());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed number exception lexicon " + path.string() + ": " + e.what());
        }
    }

    std::optional<std::string> plural_of(const std::string& w) const { return lookup(to_plural_, w); }
    std::optional<std::string> singular_of(const std::string& w) const { return lookup(to_singular_, w); }

  private:
    static std::optional<std::string> lookup(const std::map<std::string, std::string>& m, const std::string& w) {
        auto it = m.find(w);
        if (it == m.end()) return std::nullopt;
        return it->second;
    }

    std::map<std::string, std::string> to_plural_;
    std::map<std::string, std::string> to_singular_;
};

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// Copies the capitalization of the first letter of `like` onto `word`.
inline std::string match_case(const std::string& like, std::string word) {
    if (!like.empty() && !word.empty() && std::isupper(static_cast<unsigned char>(like[0])))
        word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    return word;
}

inline std::optional<std::string> regular_plural(const std::string& lower) {
    if (lower.size() >= 2 && ends_with(lower, "y") && !is_vowel(lower[lower.size() - 2]))
        return lower.substr(0, lower.size() - 1) + "ies";
    for (std::string_view s : {"s", "x", "z", "ch", "sh"})
        if (ends_with(lower, s)) return lower + "es";
    return lower + "s";
}

inline std::optional<std::string> regular_singular(const std::string& lower) {
    if (lower.size() > 3 && ends_with(lower, "ies")) return lower.substr(0, lower.size() - 3) + "y";
    for (std::string_view s : {"xes", "ches", "shes", "sses"})
        if (ends_with(lower, s)) return lower.substr(0, lower.size() - 2);
    if (lower.size() > 1 && ends_with(lower, "s") && !ends_with(lower, "ss") && !ends_with(lower, "us") &&
        !ends_with(lower, "is"))
        return lower.substr(0, lower.size() - 1);
    return std::nullopt;
}

}  // namespace detail

// Flips grammatical number; nullopt when neither the lexicon nor a regular
// rule applies.
inline std::optional<std::string> flip_number(const std::string& word, Number number, const NumberLexicon& lexicon) {
    const std::string lower = ascii_lower(word);
    std::optional<std::string> flipped;
    if (number == Number::Plural) {
        flipped = lexicon.singular_of(lower);
        if (!flipped) flipped = detail::regular_singular(lower);
    } else if (number == Number::Singular) {
        flipped = lexicon.plural_of(lower);
        if (!flipped) flipped = detail::regular_plural(lower);
    }
    if (!flipped) return std::nullopt;
    return detail::match_case(word, *flipped);
}

struct NoiseResources {
    std::string language = "en";
    std::optional<ReplacementTable> table;
    std::optional<NumberLexicon> number_exceptions;
};

namespace skip {
inline constexpr std::string_view kNoCandidate = "no_candidate";
inline constexpr std::string_view kNoReplacement = "no_replacement";
inline constexpr std::string_view kIrregular = "irregular_number";
inline constexpr std::string_view kIdentical = "identical_form";
inline constexpr std::string_view kUnchanged = "unchanged";
}  // namespace skip

struct InjectOutcome {
    std::optional<NoisePair> pair;
    std::string skip_reason;  // set when pair is empty
};

inline InjectOutcome inject(const TaggedSentence& sentence, ErrorType type, const NoiseResources& resources,
                            std::uint64_t seed) {
    sentence.validate();
    auto skipped = [](std::string_view why) { return InjectOutcome{std::nullopt, std::string(why)}; };
    Rng rng(derive_seed(seed, sentence.id));

    std::vector<std::uint32_t> candidates;
    std::string replacement;
    std::uint32_t position = 0;

    switch (type) {
        case ErrorType::Article:
        case ErrorType::Prep: {
            if (!resources.table) throw ConfigError("a replacement table is required for article/prep noise");
            const auto lists = word_lists(resources.language);
            const auto& list = type == ErrorType::Article ? lists.articles : lists.prepositions;
            const std::set<std::string> members(list.begin(), list.end());
            for (std::uint32_t i = 0; i < sentence.words.size(); ++i)
                if (members.count(ascii_lower(sentence.words[i]))) candidates.push_back(i);
            if (candidates.empty()) return skipped(skip::kNoCandidate);
            position = candidates[rng.uniform_index(candidates.size())];
            const auto* dist = resources.table->find(ascii_lower(sentence.words[position]));
            if (!dist || dist->empty()) return skipped(skip::kNoReplacement);
            replacement = detail::match_case(sentence.words[position], sample(*dist, rng));
            break;
        }
        case ErrorType::Nounnum: {
            if (!resources.number_exceptions)
                throw ConfigError("a number exception lexicon is required for nounnum noise");
            for (std::uint32_t i = 0; i < sentence.words.size(); ++i)
                if (sentence.tags[i] == PosTag::NOUN && sentence.number_at(i) != Number::None) candidates.push_back(i);
            if (candidates.empty()) return skipped(skip::kNoCandidate);
            position = candidates[rng.uniform_index(candidates.size())];
            auto flipped = flip_number(sentence.words[position], sentence.number_at(position), *resources.number_exceptions);
            if (!flipped) return skipped(skip::kIrregular);
            replacement = std::move(*flipped);
            break;
        }
        case ErrorType::Morpheus:
            throw ConfigError("morpheus noise is produced by the attack, not by inject");
    }

    if (replacement == sentence.words[position]) return skipped(skip::kIdentical);
    NoisePair pair{sentence.id, sentence.words, sentence.words, type, {position}};
    pair.noisy[position] = std::move(replacement);
    return {std::move(pair), {}};
}

struct SkipReport {
    std::size_t total = 0;
    std::size_t emitted = 0;
    std::map<std::string, std::size_t> skipped;

    std::size_t skipped_total() const {
        std::size_t n = 0;
        for (const auto& [_, c] : skipped) n += c;
        return n;
    }

    nlohmann::json to_json() const {
        return {{"total", total}, {"emitted", emitted}, {"skipped", skipped_total()}, {"reasons", skipped}};
    }
};

struct InjectedCorpus {
    std::vector<NoisePair> pairs;
    SkipReport report;
};

inline InjectedCorpus inject_corpus(const std::vector<TaggedSentence>& corpus, ErrorType type,
                                    const NoiseResources& resources, std::uint64_t seed) {
    InjectedCorpus out;
    out.report.total = corpus.size();
    for (const auto& s : corpus) {
        auto outcome = inject(s, type, resources, seed);
        if (outcome.pair) {
            out.pairs.push_back(std::move(*outcome.pair));
        } else {
            ++out.report.skipped[outcome.skip_reason];
        }
    }
    out.report.emitted = out.pairs.size();
    return out;
}

}  // namespace encaudit
