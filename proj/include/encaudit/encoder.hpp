#pragma once

// A small post-layer-norm transformer encoder with per-head ablation.
//
// Block order per layer:
//   x = LayerNorm(x + MultiHeadAttention(x))
//   x = LayerNorm(x + W2 * relu(W1 * x))
// with sinusoidal positions added to the token embeddings. Masking a head
// zeroes its context vectors before the output projection; the remaining
// heads are left untouched.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "encaudit/binary_io.hpp"
#include "encaudit/errors.hpp"
#include "encaudit/rng.hpp"

namespace encaudit {

using MatrixRf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EncoderConfig {
    std::uint32_t num_layers = 2;
    std::uint32_t num_heads = 2;
    std::uint32_t model_dim = 16;
    std::uint32_t ffn_dim = 64;
    std::uint32_t vocab_size = 0;
    std::uint32_t max_positions = 128;
    std::uint64_t seed = 0;

    std::uint32_t head_dim() const { return model_dim / num_heads; }

    void validate() const {
        if (num_layers < 1 || num_heads < 1 || model_dim < 1 || ffn_dim < 1 || vocab_size < 1 ||
            max_positions < 1)
            throw ConfigError("encoder config: all counts must be >= 1");
        if (model_dim % num_heads != 0)
            throw ConfigError("encoder config: model_dim " + std::to_string(model_dim) +
                              " not divisible by num_heads " + std::to_string(num_heads));
    }

    bool operator==(const EncoderConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = nlohmann::json{{"num_layers", c.num_layers}, {"num_heads", c.num_heads},
                       {"model_dim", c.model_dim},   {"ffn_dim", c.ffn_dim},
                       {"vocab_size", c.vocab_size}, {"max_positions", c.max_positions},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
    EncoderConfig d;
    c.num_layers = j.value("num_layers", d.num_layers);
    c.num_heads = j.value("num_heads", d.num_heads);
    c.model_dim = j.value("model_dim", d.model_dim);
    c.ffn_dim = j.value("ffn_dim", 4 * c.model_dim);
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.max_positions = j.value("max_positions", d.max_positions);
    c.seed = j.value("seed", d.seed);
}

// ---------------------------------------------------------------------------
// Tokenization

struct WordSpan {
    std::uint32_t start = 0;
    std::uint32_t end = 0;  // exclusive

    bool operator==(const WordSpan&) const = default;
};

// Spans must be non-empty, ordered, contiguous and cover [0, token_count).
inline bool spans_partition(const std::vector<WordSpan>& spans, std::uint32_t token_count) {
    std::uint32_t next = 0;
    for (const auto& s : spans) {
        if (s.start != next || s.end <= s.start) return false;
        next = s.end;
    }
    return next == token_count;
}

struct TokenizedSentence {
    std::vector<std::uint32_t> ids;
    std::vector<WordSpan> word_spans;
};

class Vocabulary {
  public:
    Vocabulary() = default;

    explicit Vocabulary(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            if (pieces_[i].empty()) continue;
            index_.emplace(pieces_[i], static_cast<std::uint32_t>(i));
            max_piece_bytes_ = std::max(max_piece_bytes_, pieces_[i].size());
        }
    }

    // One subword per line; the zero-based line number is the token id.
    static Vocabulary load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open vocabulary " + path.string());
        std::vector<std::string> pieces;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            pieces.push_back(line);
        }
        return Vocabulary(std::move(pieces));
    }

    std::size_t size() const { return pieces_.size(); }
    const std::string& piece(std::uint32_t id) const { return pieces_.at(id); }
    std::size_t max_piece_bytes() const { return max_piece_bytes_; }

    std::optional<std::uint32_t> find(std::string_view piece) const {
        auto it = index_.find(std::string(piece));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

  private:
    std::vector<std::string> pieces_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::size_t max_piece_bytes_ = 0;
};

namespace detail {

inline std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;
}

inline bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

}  // namespace detail

// Greedy longest-match segmentation of each word, left to right. A
// character with no piece falls back to "<0xNN>" byte pieces.
inline TokenizedSentence tokenize(const std::vector<std::string>& words, const Vocabulary& vocab) {
    TokenizedSentence out;
    for (const auto& word : words) {
        if (word.empty()) throw TokenizationError("empty word");
        const auto start = static_cast<std::uint32_t>(out.ids.size());
        std::size_t pos = 0;
        while (pos < word.size()) {
            const std::size_t longest = std::min(vocab.max_piece_bytes(), word.size() - pos);
            bool matched = false;
            for (std::size_t len = longest; len > 0; --len) {
                // never cut inside a multi-byte character
                if (pos + len < word.size() &&
                    detail::is_continuation(static_cast<unsigned char>(word[pos + len])))
                    continue;
                if (auto id = vocab.find(std::string_view(word).substr(pos, len))) {
                    out.ids.push_back(*id);
                    pos += len;
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
            const std::size_t char_len =
                std::min(detail::utf8_length(static_cast<unsigned char>(word[pos])), word.size() - pos);
            for (std::size_t b = 0; b < char_len; ++b) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "<0x%02X>", static_cast<unsigned char>(word[pos + b]));
                auto id = vocab.find(buf);
                if (!id)
                    throw TokenizationError("no piece for character '" + word.substr(pos, char_len) +
                                            "' in word '" + word + "'");
                out.ids.push_back(*id);
            }
            pos += char_len;
        }
        out.word_spans.push_back({start, static_cast<std::uint32_t>(out.ids.size())});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weights

struct LayerWeights {
    MatrixRf wq, wk, wv, wo;  // d x d, applied as x * W
    MatrixRf bq, bk, bv, bo;  // 1 x d
    MatrixRf w1;              // d x ffn
    MatrixRf b1;              // 1 x ffn
    MatrixRf w2;              // ffn x d
    MatrixRf b2;              // 1 x d
    MatrixRf ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x d
};

struct EncoderWeights {
    EncoderConfig config;
    MatrixRf embedding;  // vocab x d
    std::vector<LayerWeights> layers;

    // Visits every tensor in manifest order. The same order is used for
    // initialization, saving and loading.
    template <typename Self, typename Fn>
    static void visit(Self& self, Fn&& fn) {
        fn("embedding", self.embedding);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            auto& l = self.layers[i];
            const std::string p = "layers." + std::to_string(i) + ".";
            fn(p + "wq", l.wq);
            fn(p + "bq", l.bq);
            fn(p + "wk", l.wk);
            fn(p + "bk", l.bk);
            fn(p + "wv", l.wv);
            fn(p + "bv", l.bv);
            fn(p + "wo", l.wo);
            fn(p + "bo", l.bo);
            fn(p + "w1", l.w1);
            fn(p + "b1", l.b1);
            fn(p + "w2", l.w2);
            fn(p + "b2", l.b2);
            fn(p + "ln1_gain", l.ln1_gain);
            fn(p + "ln1_bias", l.ln1_bias);
            fn(p + "ln2_gain", l.ln2_gain);
            fn(p + "ln2_bias", l.ln2_bias);
        }
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) { visit(*this, std::forward<Fn>(fn)); }
    template <typename Fn>
    void for_each_tensor(Fn&& fn) const { visit(*this, std::forward<Fn>(fn)); }

    bool operator==(const EncoderWeights& other) const {
        if (!(config == other.config) || layers.size() != other.layers.size()) return false;
        std::vector<const MatrixRf*> mine, theirs;
        for_each_tensor([&](const std::string&, const MatrixRf& m) { mine.push_back(&m); });
        other.for_each_tensor([&](const std::string&, const MatrixRf& m) { theirs.push_back(&m); });
        for (std::size_t i = 0; i < mine.size(); ++i) {
            if (mine[i]->rows() != theirs[i]->rows() || mine[i]->cols() != theirs[i]->cols()) return false;
            if (std::memcmp(mine[i]->data(), theirs[i]->data(), sizeof(float) * mine[i]->size()) != 0)
                return false;
        }
        return true;
    }
};

// Allocates zero tensors with the shapes implied by the config.
inline EncoderWeights allocate_weights(const EncoderConfig& config) {
    config.validate();
    const Eigen::Index d = config.model_dim, f = config.ffn_dim;
    EncoderWeights w;
    w.config = config;
    w.embedding = MatrixRf::Zero(config.vocab_size, d);
    w.layers.resize(config.num_layers);
    for (auto& l : w.layers) {
        l.wq = l.wk = l.wv = l.wo = MatrixRf::Zero(d, d);
        l.bq = l.bk = l.bv = l.bo = MatrixRf::Zero(1, d);
        l.w1 = MatrixRf::Zero(d, f);
        l.b1 = MatrixRf::Zero(1, f);
        l.w2 = MatrixRf::Zero(f, d);
        l.b2 = MatrixRf::Zero(1, d);
        l.ln1_gain = l.ln2_gain = MatrixRf::Ones(1, d);
        l.ln1_bias = l.ln2_bias = MatrixRf::Zero(1, d);
    }
    return w;
}

// Xavier-uniform U(-a, a), a = sqrt(6 / (fan_in + fan_out)) for every
// matrix; biases zero; layer-norm gains one.
inline EncoderWeights init_seeded(const EncoderConfig& config) {
    EncoderWeights w = allocate_weights(config);
    Rng rng(config.seed);
    w.for_each_tensor([&](const std::string& name, MatrixRf& m) {
        if (m.rows() == 1 && name != "embedding") return;  // biases and layer-norm parameters
        const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = static_cast<float>(rng.uniform(-a, a));
    });
    return w;
}

inline constexpr std::string_view kWeightsMagic = "ENCW";
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

// Tensor container shared by encoder weights and probe parameters: preamble
// with {"kind", "config", "tensors": [{"name", "shape"}]}, then row-major
// float32 payloads in manifest order.
inline void write_tensor_container(const std::filesystem::path& path, const nlohmann::json& head,
                                   const std::vector<std::pair<std::string, const MatrixRf*>>& tensors) {
    nlohmann::json header = head;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, m] : tensors)
        header["tensors"].push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    io::write_preamble(out, kWeightsMagic, kWeightsVersion, header);
    for (const auto& [name, m] : tensors)
        io::write_f32s(out, std::span<const float>(m->data(), static_cast<std::size_t>(m->size())));
    if (!out) throw FormatError("write failed for " + path.string());
}

struct TensorContainer {
    nlohmann::json header;
    std::vector<std::pair<std::string, MatrixRf>> tensors;
};

inline TensorContainer read_tensor_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    TensorContainer c;
    c.header = io::read_preamble(in, kWeightsMagic, kWeightsVersion);
    if (!c.header.contains("tensors") || !c.header["tensors"].is_array())
        throw FormatError("tensor manifest missing");
    const auto payload_start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto payload_bytes = static_cast<std::uint64_t>(in.tellg() - payload_start);
    in.seekg(payload_start);

    std::uint64_t expected = 0;
    for (const auto& t : c.header["tensors"]) {
        const auto& shape = t.at("shape");
        if (shape.size() != 2) throw FormatError("tensor " + t.value("name", "?") + " is not 2-D");
        expected += shape[0].get<std::uint64_t>() * shape[1].get<std::uint64_t>() * sizeof(float);
    }
    if (expected != payload_bytes)
        throw FormatError("payload holds " + std::to_string(payload_bytes) + " bytes, manifest declares " +
                          std::to_string(expected));
    for (const auto& t : c.header["tensors"]) {
        MatrixRf m(t["shape"][0].get<Eigen::Index>(), t["shape"][1].get<Eigen::Index>());
        io::read_f32s(in, std::span<float>(m.data(), static_cast<std::size_t>(m.size())),
                      t.at("name").get<std::string>());
        c.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
    }
    return c;
}

}  // namespace detail

inline void save_weights(const EncoderWeights& weights, const std::filesystem::path& path) {
    std::vector<std::pair<std::string, const MatrixRf*>> tensors;
    weights.for_each_tensor([&](const std::string& name, const MatrixRf& m) { tensors.emplace_back(name, &m); });
    detail::write_tensor_container(path, {{"kind", "encoder"}, {"config", weights.config}}, tensors);
}

// When `expected` is given the stored config must match it.
inline EncoderWeights load_weights(const std::filesystem::path& path,
                                   const std::optional<EncoderConfig>& expected = std::nullopt) {
    auto container = detail::read_tensor_container(path);
    EncoderConfig config;
    try {
        config = container.header.at("config").get<EncoderConfig>();
        config.validate();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad encoder config in header: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(e.what());
    }
    if (expected && !(*expected == config))
        throw FormatError("weight file config does not match the requested encoder config");

    EncoderWeights w = allocate_weights(config);
    std::size_t i = 0;
    w.for_each_tensor([&](const std::string& name, MatrixRf& m) {
        if (i >= container.tensors.size()) throw FormatError("weight file is missing tensor " + name);
        auto& [stored_name, stored] = container.tensors[i++];
        if (stored_name != name) throw FormatError("expected tensor " + name + ", found " + stored_name);
        if (stored.rows() != m.rows() || stored.cols() != m.cols())
            throw FormatError("tensor " + name + " has shape " + std::to_string(stored.rows()) + "x" +
                              std::to_string(stored.cols()) + ", config implies " + std::to_string(m.rows()) +
                              "x" + std::to_string(m.cols()));
        m = std::move(stored);
    });
    if (i != container.tensors.size()) throw FormatError("weight file has extra tensors");
    return w;
}

// ---------------------------------------------------------------------------
// Forward pass

class HeadMask {
  public:
    HeadMask() = default;
    HeadMask(std::initializer_list<std::pair<std::uint32_t, std::uint32_t>> heads) : heads_(heads) {}

    void add(std::uint32_t layer, std::uint32_t head) { heads_.emplace(layer, head); }
    bool contains(std::uint32_t layer, std::uint32_t head) const { return heads_.count({layer, head}) > 0; }
    bool empty() const { return heads_.empty(); }

    void validate(const EncoderConfig& config) const {
        for (const auto& [l, h] : heads_)
            if (l >= config.num_layers || h >= config.num_heads)
                throw IndexError("head mask entry (" + std::to_string(l) + "," + std::to_string(h) +
                                 ") outside " + std::to_string(config.num_layers) + "x" +
                                 std::to_string(config.num_heads));
    }

  private:
    std::set<std::pair<std::uint32_t, std::uint32_t>> heads_;
};

struct ForwardTrace {
    std::vector<MatrixRf> hidden_states;           // L+1 matrices, T x d
    std::vector<std::vector<MatrixRf>> attentions;  // L x H matrices, T x T
};

namespace detail {

inline MatrixRf sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
    MatrixRf pe(length, dim);
    for (Eigen::Index pos = 0; pos < length; ++pos) {
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            const double angle = static_cast<double>(pos) / rate;
            pe(pos, i) = static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return pe;
}

inline void layer_norm(MatrixRf& x, const MatrixRf& gain, const MatrixRf& bias) {
    constexpr float eps = 1e-5f;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        const float mean = row.mean();
        row.array() -= mean;
        const float var = row.squaredNorm() / static_cast<float>(row.size());
        row *= 1.0f / std::sqrt(var + eps);
        row = row.cwiseProduct(gain) + bias;
    }
}

inline void softmax_rows(MatrixRf& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
}

}  // namespace detail

// Applies encoder layer `layer` to `input`. Attention probabilities are
// written to `attentions` (one T x T matrix per head) when non-null.
inline MatrixRf encoder_layer(const EncoderWeights& w, std::uint32_t layer, const MatrixRf& input,
                              const HeadMask& mask, std::vector<MatrixRf>* attentions = nullptr) {
    const auto& cfg = w.config;
    const auto& lw = w.layers.at(layer);
    const Eigen::Index dk = cfg.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(dk));

    const MatrixRf q = (input * lw.wq).rowwise() + lw.bq.row(0);
    const MatrixRf k = (input * lw.wk).rowwise() + lw.bk.row(0);
    const MatrixRf v = (input * lw.wv).rowwise() + lw.bv.row(0);

    MatrixRf context = MatrixRf::Zero(input.rows(), cfg.model_dim);
    if (attentions) attentions->assign(cfg.num_heads, MatrixRf());
    for (std::uint32_t h = 0; h < cfg.num_heads; ++h) {
        const Eigen::Index c0 = h * dk;
        MatrixRf scores = (q.middleCols(c0, dk) * k.middleCols(c0, dk).transpose()) * scale;
        detail::softmax_rows(scores);
        if (!mask.contains(layer, h)) context.middleCols(c0, dk) = scores * v.middleCols(c0, dk);
        if (attentions) (*attentions)[h] = std::move(scores);
    }

    MatrixRf x = input + ((context * lw.wo).rowwise() + lw.bo.row(0));
    detail::layer_norm(x, lw.ln1_gain, lw.ln1_bias);
    const MatrixRf hidden = ((x * lw.w1).rowwise() + lw.b1.row(0)).cwiseMax(0.0f);
    x += (hidden * lw.w2).rowwise() + lw.b2.row(0);
    detail::layer_norm(x, lw.ln2_gain, lw.ln2_bias);
    return x;
}

inline MatrixRf embed(const EncoderWeights& w, const TokenizedSentence& sentence) {
    const auto& cfg = w.config;
    const auto t = static_cast<Eigen::Index>(sentence.ids.size());
    if (t > static_cast<Eigen::Index>(cfg.max_positions))
        throw LengthError("sentence has " + std::to_string(t) + " tokens, max_positions is " +
                          std::to_string(cfg.max_positions));
    MatrixRf x(t, cfg.model_dim);
    for (Eigen::Index i = 0; i < t; ++i) {
        const auto id = sentence.ids[static_cast<std::size_t>(i)];
        if (id >= cfg.vocab_size) throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
        x.row(i) = w.embedding.row(id);
    }
    return x + detail::sinusoidal_positions(t, cfg.model_dim);
}

inline ForwardTrace forward(const EncoderWeights& w, const TokenizedSentence& sentence,
                            const HeadMask& mask = {}) {
    mask.validate(w.config);
    ForwardTrace trace;
    trace.hidden_states.reserve(w.config.num_layers + 1);
    trace.hidden_states.push_back(embed(w, sentence));
    trace.attentions.resize(w.config.num_layers);
    for (std::uint32_t l = 0; l < w.config.num_layers; ++l)
        trace.hidden_states.push_back(
            encoder_layer(w, l, trace.hidden_states.back(), mask, &trace.attentions[l]));
    return trace;
}

// Last-subword rule: a word is represented by its final token's state.
inline Eigen::VectorXf word_representation(const ForwardTrace& trace, const std::vector<WordSpan>& spans,
                                           std::size_t word_index, std::size_t layer) {
    if (word_index >= spans.size())
        throw IndexError("word index " + std::to_string(word_index) + " outside " +
                         std::to_string(spans.size()) + " words");
    if (layer >= trace.hidden_states.size())
        throw IndexError("layer " + std::to_string(layer) + " outside 0.." +
                         std::to_string(trace.hidden_states.size() - 1));
    const auto& states = trace.hidden_states[layer];
    const auto row = static_cast<Eigen::Index>(spans[word_index].end) - 1;
    if (row < 0 || row >= states.rows()) throw IndexError("word span outside the token sequence");
    return states.row(row).transpose();
}

}  // namespace encaudit
