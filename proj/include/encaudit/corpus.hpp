#pragma once

// Tagged sentences, noise pairs and their JSON-lines files.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "encaudit/errors.hpp"

namespace encaudit {

enum class PosTag { ADJ, ADP, ADV, AUX, CCONJ, DET, NOUN, PRON, PROPN, PUNCT, VERB, OTHER };

inline constexpr std::array<std::string_view, 12> kPosTagNames = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "NOUN", "PRON", "PROPN", "PUNCT", "VERB", "OTHER"};

inline std::string_view to_string(PosTag tag) { return kPosTagNames[static_cast<std::size_t>(tag)]; }

// Tags outside the coarse set map to OTHER.
inline PosTag parse_pos_tag(std::string_view name) {
    for (std::size_t i = 0; i < kPosTagNames.size(); ++i)
        if (kPosTagNames[i] == name) return static_cast<PosTag>(i);
    return PosTag::OTHER;
}

enum class Number { None, Singular, Plural };

struct TaggedSentence {
    std::string id;
    std::vector<std::string> words;
    std::vector<PosTag> tags;
    std::vector<Number> number;  // empty when the corpus carries no features

    void validate() const {
        if (words.empty()) throw FormatError("sentence " + id + " has no words");
        if (tags.size() != words.size())
            throw FormatError("sentence " + id + ": " + std::to_string(words.size()) + " words but " +
                              std::to_string(tags.size()) + " tags");
        if (!number.empty() && number.size() != words.size())
            throw FormatError("sentence " + id + ": number features do not align with words");
    }

    Number number_at(std::size_t i) const { return number.empty() ? Number::None : number[i]; }
};

enum class ErrorType { Article, Prep, Nounnum, Morpheus };

inline std::string_view to_string(ErrorType t) {
    switch (t) {
        case ErrorType::Article: return "article";
        case ErrorType::Prep: return "prep";
        case ErrorType::Nounnum: return "nounnum";
        case ErrorType::Morpheus: return "morpheus";
    }
    return "?";
}

inline ErrorType parse_error_type(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "article") return ErrorType::Article;
    if (lower == "prep") return ErrorType::Prep;
    if (lower == "nounnum") return ErrorType::Nounnum;
    if (lower == "morpheus") return ErrorType::Morpheus;
    throw ConfigError("unknown error type '" + std::string(name) + "'");
}

struct NoisePair {
    std::string id;
    std::vector<std::string> clean;
    std::vector<std::string> noisy;
    ErrorType type = ErrorType::Article;
    std::vector<std::uint32_t> error_indices;

    // Word analyses use the first changed position as the error word.
    std::optional<std::uint32_t> target_word() const {
        if (error_indices.empty()) return std::nullopt;
        return error_indices.front();
    }

    bool operator==(const NoisePair&) const = default;
};

// ---------------------------------------------------------------------------
// JSON-lines I/O

inline TaggedSentence tagged_sentence_from_json(const nlohmann::json& j) {
    TaggedSentence s;
    try {
        s.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
        s.words = j.at("words").get<std::vector<std::string>>();
        for (const auto& t : j.at("tags")) s.tags.push_back(parse_pos_tag(t.get<std::string>()));
        if (j.contains("number") && !j["number"].is_null()) {
            for (const auto& n : j["number"]) {
                if (n.is_null()) s.number.push_back(Number::None);
                else if (n == "sg") s.number.push_back(Number::Singular);
                else if (n == "pl") s.number.push_back(Number::Plural);
                else throw FormatError("sentence " + s.id + ": number feature must be \"sg\", \"pl\" or null");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed corpus line: ") + e.what());
    }
    s.validate();
    return s;
}

inline nlohmann::json to_json(const TaggedSentence& s) {
    nlohmann::json tags = nlohmann::json::array();
    for (auto t : s.tags) tags.push_back(std::string(to_string(t)));
    nlohmann::json j = {{"id", s.id}, {"words", s.words}, {"tags", tags}};
    if (!s.number.empty()) {
        nlohmann::json num = nlohmann::json::array();
        for (auto n : s.number) {
            if (n == Number::Singular) num.push_back("sg");
            else if (n == Number::Plural) num.push_back("pl");
            else num.push_back(nullptr);
        }
        j["number"] = num;
    }
    return j;
}

inline nlohmann::json to_json(const NoisePair& p) {
    return {{"id", p.id},
            {"clean", p.clean},
            {"noisy", p.noisy},
            {"type", std::string(to_string(p.type))},
            {"error_indices", p.error_indices}};
}

inline NoisePair noise_pair_from_json(const nlohmann::json& j) {
    NoisePair p;
    try {
        p.id = j.at("id").get<std::string>();
        p.clean = j.at("clean").get<std::vector<std::string>>();
        p.noisy = j.at("noisy").get<std::vector<std::string>>();
        p.type = parse_error_type(j.at("type").get<std::string>());
        p.error_indices = j.at("error_indices").get<std::vector<std::uint32_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed noise pair: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(e.what());
    }
    if (p.clean.size() != p.noisy.size()) throw FormatError("pair " + p.id + ": clean and noisy lengths differ");
    for (auto i : p.error_indices)
        if (i >= p.clean.size()) throw FormatError("pair " + p.id + ": error index outside the sentence");
    return p;
}

template <typename T, typename Parse>
inline std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(parse(j));
    }
    return out;
}

inline std::vector<TaggedSentence> read_corpus(const std::filesystem::path& path) {
    return read_jsonl<TaggedSentence>(path, tagged_sentence_from_json);
}

inline std::vector<NoisePair> read_noise_pairs(const std::filesystem::path& path) {
    return read_jsonl<NoisePair>(path, noise_pair_from_json);
}

template <typename T>
inline void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    for (const auto& item : items) out << to_json(item).dump() << '\n';
}

inline std::string join_words(const std::vector<std::string>& words) {
    std::string s;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) s += ' ';
        s += words[i];
    }
    return s;
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace encaudit
