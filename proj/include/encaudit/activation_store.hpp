#pragma once

// NMTD activation dumps.
//
// Layout (little-endian throughout):
//
//   "NMTD"  u32 version = 1  u64 header length  JSON header
//   per sentence, in order:
//     u32 sentence index
//     u32 T (tokens)
//     u32 W (words)
//     W x (u32 start, u32 end)          word spans, end exclusive
//     u32 target word index             0xFFFFFFFF = none
//     f32 hidden states   (L+1) x T x d
//     f32 attentions      L x H x T x T   if has_attention
//     f32 ablations       L x H x d       if has_ablations and a target is set
//
// ablations[j][h] is the target word's layer-(j+1) state with head h of
// layer j masked.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "encaudit/binary_io.hpp"
#include "encaudit/encoder.hpp"
#include "encaudit/errors.hpp"
#include "encaudit/similarity.hpp"

namespace encaudit {

inline constexpr std::string_view kDumpMagic = "NMTD";
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::uint32_t kNoTarget = 0xFFFFFFFFu;
inline constexpr double kAttentionRowTolerance = 1e-4;

struct DumpHeader {
    std::string model_id;
    std::uint32_t num_layers = 0;
    std::uint32_t num_heads = 0;
    std::uint32_t model_dim = 0;
    bool has_attention = false;
    bool has_ablations = false;
    std::uint64_t sentence_count = 0;
    nlohmann::json meta = nlohmann::json::object();

    nlohmann::json to_json() const {
        return {{"format", "NMTD"},
                {"model_id", model_id},
                {"num_layers", num_layers},
                {"num_heads", num_heads},
                {"model_dim", model_dim},
                {"has_attention", has_attention},
                {"has_ablations", has_ablations},
                {"sentence_count", sentence_count},
                {"meta", meta}};
    }

    static DumpHeader from_json(const nlohmann::json& j) {
        DumpHeader h;
        try {
            h.model_id = j.at("model_id").get<std::string>();
            h.num_layers = j.at("num_layers").get<std::uint32_t>();
            h.num_heads = j.at("num_heads").get<std::uint32_t>();
            h.model_dim = j.at("model_dim").get<std::uint32_t>();
            h.has_attention = j.at("has_attention").get<bool>();
            h.has_ablations = j.at("has_ablations").get<bool>();
            h.sentence_count = j.at("sentence_count").get<std::uint64_t>();
            h.meta = j.value("meta", nlohmann::json::object());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad dump header: ") + e.what());
        }
        if (h.num_layers < 1 || h.num_heads < 1 || h.model_dim < 1)
            throw FormatError("dump header declares an empty model");
        return h;
    }

    bool operator==(const DumpHeader& o) const {
        return model_id == o.model_id && num_layers == o.num_layers && num_heads == o.num_heads &&
               model_dim == o.model_dim && has_attention == o.has_attention &&
               has_ablations == o.has_ablations && sentence_count == o.sentence_count && meta == o.meta;
    }
};

struct SentenceRecord {
    std::uint32_t sentence_index = 0;
    std::uint32_t token_count = 0;
    std::vector<WordSpan> word_spans;
    std::optional<std::uint32_t> target_word;

    // Shape, copied from the header when the record is read or built.
    std::uint32_t num_layers = 0;
    std::uint32_t num_heads = 0;
    std::uint32_t model_dim = 0;

    std::vector<float> hidden_states;  // (L+1) x T x d
    std::vector<float> attentions;     // L x H x T x T, or empty
    std::vector<float> ablations;      // L x H x d, or empty

    std::size_t word_count() const { return word_spans.size(); }

    std::span<const float> hidden(std::size_t layer, std::size_t token) const {
        const std::size_t offset = (layer * token_count + token) * model_dim;
        return {hidden_states.data() + offset, model_dim};
    }

    // Last-subword state of `word` at `layer`.
    std::span<const float> word_state(std::size_t layer, std::size_t word) const {
        if (word >= word_spans.size())
            throw IndexError("word " + std::to_string(word) + " outside sentence " + std::to_string(sentence_index));
        if (layer > num_layers)
            throw IndexError("layer " + std::to_string(layer) + " outside 0.." + std::to_string(num_layers));
        return hidden(layer, word_spans[word].end - 1);
    }

    Eigen::Map<const MatrixRf> attention(std::size_t layer, std::size_t head) const {
        const std::size_t tt = static_cast<std::size_t>(token_count) * token_count;
        return {attentions.data() + (layer * num_heads + head) * tt, token_count, token_count};
    }

    std::span<const float> ablation(std::size_t layer, std::size_t head) const {
        return {ablations.data() + (layer * num_heads + head) * model_dim, model_dim};
    }

    bool operator==(const SentenceRecord&) const = default;
};

inline void fill_shape(SentenceRecord& r, const DumpHeader& h) {
    r.num_layers = h.num_layers;
    r.num_heads = h.num_heads;
    r.model_dim = h.model_dim;
}

namespace detail {

inline std::string where(const SentenceRecord& r, const char* field) {
    return "sentence " + std::to_string(r.sentence_index) + ", field " + field + ": ";
}

// Structural checks shared by the writer and the reader.
template <typename Err>
inline void check_record_shape(const SentenceRecord& r, const DumpHeader& h) {
    const std::size_t t = r.token_count, l = h.num_layers, hh = h.num_heads, d = h.model_dim;
    if (t == 0) throw Err(where(r, "tokens") + "empty sentence");
    if (!spans_partition(r.word_spans, r.token_count))
        throw Err(where(r, "word_spans") + "spans do not partition [0," + std::to_string(t) + ")");
    if (r.target_word && *r.target_word >= r.word_spans.size())
        throw Err(where(r, "target_word") + "index " + std::to_string(*r.target_word) + " outside " +
                  std::to_string(r.word_spans.size()) + " words");
    if (r.hidden_states.size() != (l + 1) * t * d)
        throw Err(where(r, "hidden_states") + "expected " + std::to_string((l + 1) * t * d) + " values, got " +
                  std::to_string(r.hidden_states.size()));
    const std::size_t want_attn = h.has_attention ? l * hh * t * t : 0;
    if (r.attentions.size() != want_attn)
        throw Err(where(r, "attentions") + "expected " + std::to_string(want_attn) + " values, got " +
                  std::to_string(r.attentions.size()));
    const std::size_t want_abl = (h.has_ablations && r.target_word) ? l * hh * d : 0;
    if (r.ablations.size() != want_abl)
        throw Err(where(r, "ablations") + "expected " + std::to_string(want_abl) + " values, got " +
                  std::to_string(r.ablations.size()));
}

}  // namespace detail

class DumpWriter {
  public:
    // header.sentence_count must equal the number of records written before
    // finish().
    DumpWriter(const std::filesystem::path& path, DumpHeader header)
        : header_(std::move(header)), out_(path, std::ios::binary), path_(path) {
        if (!out_) throw ConfigError("cannot write dump " + path.string());
        io::write_preamble(out_, kDumpMagic, kDumpVersion, header_.to_json());
    }

    const DumpHeader& header() const { return header_; }

    void write(const SentenceRecord& r) {
        if (written_ >= header_.sentence_count)
            throw FormatError("more records than the declared sentence_count " +
                              std::to_string(header_.sentence_count));
        detail::check_record_shape<FormatError>(r, header_);
        io::write_u32(out_, r.sentence_index);
        io::write_u32(out_, r.token_count);
        io::write_u32(out_, static_cast<std::uint32_t>(r.word_spans.size()));
        for (const auto& s : r.word_spans) {
            io::write_u32(out_, s.start);
            io::write_u32(out_, s.end);
        }
        io::write_u32(out_, r.target_word.value_or(kNoTarget));
        io::write_f32s(out_, r.hidden_states);
        io::write_f32s(out_, r.attentions);
        io::write_f32s(out_, r.ablations);
        ++written_;
    }

    void finish() {
        if (written_ != header_.sentence_count)
            throw FormatError("wrote " + std::to_string(written_) + " records, header declares " +
                              std::to_string(header_.sentence_count));
        out_.flush();
        if (!out_) throw FormatError("write failed for " + path_.string());
        out_.close();
    }

  private:
    DumpHeader header_;
    std::ofstream out_;
    std::filesystem::path path_;
    std::uint64_t written_ = 0;
};

// Streams records one at a time, validating each.
class DumpReader {
  public:
    explicit DumpReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw ConfigError("cannot open dump " + path.string());
        header_ = DumpHeader::from_json(io::read_preamble(in_, kDumpMagic, kDumpVersion));
    }

    const DumpHeader& header() const { return header_; }
    const std::filesystem::path& path() const { return path_; }

    std::optional<SentenceRecord> next() {
        if (read_ == header_.sentence_count) {
            if (in_.peek() != std::char_traits<char>::eof())
                throw FormatError("trailing bytes after " + std::to_string(read_) + " records");
            return std::nullopt;
        }
        SentenceRecord r;
        fill_shape(r, header_);
        r.sentence_index = io::read_u32(in_, "sentence index");
        r.token_count = io::read_u32(in_, "token count");
        const auto words = io::read_u32(in_, "word count");
        if (words > r.token_count)
            throw FormatError(detail::where(r, "word_spans") + "more words than tokens");
        r.word_spans.resize(words);
        for (auto& s : r.word_spans) {
            s.start = io::read_u32(in_, "span start");
            s.end = io::read_u32(in_, "span end");
        }
        const auto target = io::read_u32(in_, "target index");
        if (target != kNoTarget) r.target_word = target;
        if (!spans_partition(r.word_spans, r.token_count))
            throw ValidationError(detail::where(r, "word_spans") + "spans do not partition the tokens");
        if (r.target_word && *r.target_word >= words)
            throw ValidationError(detail::where(r, "target_word") + "index outside the sentence");

        const std::size_t t = r.token_count, l = header_.num_layers, h = header_.num_heads,
                          d = header_.model_dim;
        r.hidden_states.resize((l + 1) * t * d);
        io::read_f32s(in_, r.hidden_states, "hidden states");
        if (header_.has_attention) {
            r.attentions.resize(l * h * t * t);
            io::read_f32s(in_, r.attentions, "attentions");
        }
        if (header_.has_ablations && r.target_word) {
            r.ablations.resize(l * h * d);
            io::read_f32s(in_, r.ablations, "ablations");
        }
        validate_values(r);
        ++read_;
        return r;
    }

  private:
    static void validate_values(const SentenceRecord& r) {
        auto finite = [](const std::vector<float>& v) {
            for (float x : v)
                if (!std::isfinite(x)) return false;
            return true;
        };
        if (!finite(r.hidden_states)) throw ValidationError(detail::where(r, "hidden_states") + "non-finite value");
        if (!finite(r.ablations)) throw ValidationError(detail::where(r, "ablations") + "non-finite value");
        const std::size_t t = r.token_count;
        for (std::size_t row = 0; row < r.attentions.size() / (t ? t : 1); ++row) {
            double sum = 0.0;
            for (std::size_t c = 0; c < t; ++c) {
                const float p = r.attentions[row * t + c];
                if (!std::isfinite(p) || p < 0.0f)
                    throw ValidationError(detail::where(r, "attentions") + "invalid probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kAttentionRowTolerance) {
                const std::size_t layer = row / (r.num_heads * t), head = (row / t) % r.num_heads;
                throw ValidationError(detail::where(r, "attentions") + "row " + std::to_string(row % t) +
                                      " of layer " + std::to_string(layer) + " head " + std::to_string(head) +
                                      " sums to " + std::to_string(sum));
            }
        }
    }

    std::ifstream in_;
    std::filesystem::path path_;
    DumpHeader header_;
    std::uint64_t read_ = 0;
};

inline void write_dump(const std::vector<SentenceRecord>& records, DumpHeader header,
                       const std::filesystem::path& path) {
    header.sentence_count = records.size();
    DumpWriter writer(path, std::move(header));
    for (const auto& r : records) writer.write(r);
    writer.finish();
}

struct LoadedDump {
    DumpHeader header;
    std::vector<SentenceRecord> records;
};

inline LoadedDump read_dump_all(const std::filesystem::path& path) {
    DumpReader reader(path);
    LoadedDump dump{reader.header(), {}};
    while (auto r = reader.next()) dump.records.push_back(std::move(*r));
    return dump;
}

// Chooses one word per sentence: either the recorded target word, or an
// explicit index per sentence (in dump order).
struct WordSelector {
    struct Target {};
    using Resolver = std::function<std::optional<std::uint32_t>(const SentenceRecord&)>;
    std::variant<Target, std::vector<std::uint32_t>, Resolver> choice = Target{};

    static WordSelector target() { return {}; }
    static WordSelector indices(std::vector<std::uint32_t> per_sentence) { return {std::move(per_sentence)}; }
    // Word chosen per record, e.g. from noise pairs keyed by sentence index.
    static WordSelector resolve(Resolver fn) { return {std::move(fn)}; }
};

namespace detail {

class WordMatrixBuilder {
  public:
    WordMatrixBuilder(std::size_t layer, WordSelector selector, std::uint32_t num_layers)
        : layer_(layer), selector_(std::move(selector)) {
        if (layer_ > num_layers)
            throw IndexError("layer " + std::to_string(layer_) + " outside 0.." + std::to_string(num_layers));
    }

    void add(const SentenceRecord& r) {
        std::optional<std::uint32_t> word;
        if (std::holds_alternative<WordSelector::Target>(selector_.choice)) {
            word = r.target_word;
        } else if (const auto* fn = std::get_if<WordSelector::Resolver>(&selector_.choice)) {
            word = (*fn)(r);
            if (word && *word >= r.word_count()) word.reset();
        } else {
            const auto& idx = std::get<std::vector<std::uint32_t>>(selector_.choice);
            if (position_ < idx.size() && idx[position_] < r.word_count()) word = idx[position_];
        }
        ++position_;
        if (!word) {
            missing_.push_back(r.sentence_index);
            return;
        }
        const auto state = r.word_state(layer_, *word);
        rows_.emplace_back(state.begin(), state.end());
        dim_ = r.model_dim;
    }

    FeatureMatrix finish() {
        if (std::holds_alternative<std::vector<std::uint32_t>>(selector_.choice) &&
            std::get<std::vector<std::uint32_t>>(selector_.choice).size() != position_)
            throw SelectionError("selector lists " +
                                 std::to_string(std::get<std::vector<std::uint32_t>>(selector_.choice).size()) +
                                 " indices for " + std::to_string(position_) + " sentences");
        if (!missing_.empty()) {
            std::string ids;
            for (std::size_t i = 0; i < missing_.size(); ++i) ids += (i ? "," : "") + std::to_string(missing_[i]);
            throw SelectionError("requested word missing in sentences " + ids);
        }
        FeatureMatrix m(static_cast<Eigen::Index>(rows_.size()), dim_);
        for (std::size_t i = 0; i < rows_.size(); ++i)
            for (std::size_t c = 0; c < dim_; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows_[i][c];
        return m;
    }

  private:
    std::size_t layer_;
    WordSelector selector_;
    std::size_t position_ = 0;
    std::size_t dim_ = 0;
    std::vector<std::vector<double>> rows_;
    std::vector<std::uint32_t> missing_;
};

}  // namespace detail

// N x d matrix of last-subword states at `layer`, one row per sentence in dump
// order.
inline FeatureMatrix extract_word_matrix(std::span<const SentenceRecord> records, std::size_t layer,
                                         const WordSelector& selector) {
    if (records.empty()) throw SelectionError("no sentences to select from");
    detail::WordMatrixBuilder builder(layer, selector, records.front().num_layers);
    for (const auto& r : records) builder.add(r);
    return builder.finish();
}

inline FeatureMatrix extract_word_matrix(const std::filesystem::path& dump, std::size_t layer,
                                         const WordSelector& selector) {
    DumpReader reader(dump);
    detail::WordMatrixBuilder builder(layer, selector, reader.header().num_layers);
    while (auto r = reader.next()) builder.add(*r);
    return builder.finish();
}

}  // namespace encaudit
