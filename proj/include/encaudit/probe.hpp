#pragma once

// Per-layer linear probes for grammatical error detection.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "encaudit/activation_store.hpp"
#include "encaudit/corpus.hpp"
#include "encaudit/encoder.hpp"
#include "encaudit/errors.hpp"
#include "encaudit/rng.hpp"
#include "encaudit/similarity.hpp"

namespace encaudit {

struct ProbeDataset {
    FeatureMatrix features;  // N x d
    std::vector<int> labels;  // 1 = ungrammatical word
    std::vector<std::pair<std::uint32_t, std::uint32_t>> provenance;  // (sentence index, word index)
    std::string split;

    std::size_t size() const { return labels.size(); }

    std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }

    void require_both_classes(const std::string& what) const {
        const auto pos = positives();
        if (pos == 0 || pos == labels.size())
            throw DatasetError(what + " split needs both classes (" + std::to_string(pos) + " positive of " +
                               std::to_string(labels.size()) + ")");
    }
};

struct ProbeTrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    double input_dropout = 0.1;
    std::size_t patience = 10;
    std::uint64_t seed = 0;

    // Adam moments.
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0) || !(weight_decay >= 0) || batch_size == 0 || max_epochs == 0 || patience == 0 ||
            !(input_dropout >= 0 && input_dropout < 1))
            throw ConfigError("probe config: rates and counts must be positive, dropout in [0,1)");
        if (patience > max_epochs) throw ConfigError("probe config: patience exceeds max_epochs");
    }
};

inline void to_json(nlohmann::json& j, const ProbeTrainConfig& c) {
    j = {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},       {"input_dropout", c.input_dropout}, {"patience", c.patience},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ProbeTrainConfig& c) {
    const ProbeTrainConfig d;
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.input_dropout = j.value("input_dropout", d.input_dropout);
    c.patience = j.value("patience", d.patience);
    c.seed = j.value("seed", d.seed);
}

struct LinearProbe {
    Eigen::VectorXd weight;
    double bias = 0.0;
    std::size_t epochs_run = 0;
    double best_dev_f1 = 0.0;
    std::uint64_t seed = 0;

    double logit(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return x.dot(weight.transpose()) + bias; }
    bool predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return logit(x) > 0.0; }
};

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    double f1() const {
        const std::size_t denom = 2 * tp + fp + fn;
        return denom == 0 || tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
};

inline ConfusionCounts confusion(const LinearProbe& probe, const ProbeDataset& data) {
    ConfusionCounts c;
    for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
        const bool predicted = probe.predict(data.features.row(i));
        const bool actual = data.labels[static_cast<std::size_t>(i)] == 1;
        if (predicted && actual) ++c.tp;
        else if (predicted) ++c.fp;
        else if (actual) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// F1 of the ungrammatical class at probability threshold 0.5; zero when
// nothing is predicted positive.
inline double eval_f1(const LinearProbe& probe, const ProbeDataset& data) { return confusion(probe, data).f1(); }

inline LinearProbe train_probe(const ProbeDataset& train, const ProbeDataset& dev, const ProbeTrainConfig& config) {
    config.validate();
    train.require_both_classes("train");
    dev.require_both_classes("dev");
    const Eigen::Index d = train.features.cols();
    if (dev.features.cols() != d) throw ShapeMismatch("train and dev feature dimensions differ");

    Rng rng(config.seed);
    LinearProbe probe;
    probe.seed = config.seed;
    probe.weight.resize(d);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < d; ++i) probe.weight(i) = rng.uniform(-bound, bound);
    probe.bias = rng.uniform(-bound, bound);

    Eigen::VectorXd m_w = Eigen::VectorXd::Zero(d), v_w = Eigen::VectorXd::Zero(d);
    double m_b = 0.0, v_b = 0.0;
    std::uint64_t step = 0;

    LinearProbe best = probe;
    best.best_dev_f1 = -1.0;
    std::size_t stale = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double keep = 1.0 - config.input_dropout;
    Eigen::RowVectorXd x(d);
    Eigen::VectorXd grad_w(d);

    std::size_t epoch = 0;
    for (; epoch < config.max_epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            grad_w.setZero();
            double grad_b = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto row = static_cast<Eigen::Index>(order[k]);
                x = train.features.row(row);
                if (config.input_dropout > 0.0)
                    for (Eigen::Index c = 0; c < d; ++c) x(c) = rng.bernoulli(keep) ? x(c) / keep : 0.0;
                const double z = x.dot(probe.weight.transpose()) + probe.bias;
                const double p = 1.0 / (1.0 + std::exp(-z));
                const double err = p - static_cast<double>(train.labels[order[k]]);
                grad_w += err * x.transpose();
                grad_b += err;
            }
            const double n = static_cast<double>(end - start);
            grad_w /= n;
            grad_b /= n;

            ++step;
            const double lr = config.learning_rate;
            // decoupled weight decay, then the Adam step
            probe.weight *= 1.0 - lr * config.weight_decay;
            probe.bias *= 1.0 - lr * config.weight_decay;
            m_w = config.beta1 * m_w + (1.0 - config.beta1) * grad_w;
            v_w = config.beta2 * v_w + (1.0 - config.beta2) * grad_w.cwiseProduct(grad_w);
            m_b = config.beta1 * m_b + (1.0 - config.beta1) * grad_b;
            v_b = config.beta2 * v_b + (1.0 - config.beta2) * grad_b * grad_b;
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            probe.weight.array() -= lr * (m_w.array() / c1) / ((v_w.array() / c2).sqrt() + config.epsilon);
            probe.bias -= lr * (m_b / c1) / (std::sqrt(v_b / c2) + config.epsilon);
        }

        const double f1 = eval_f1(probe, dev);
        if (f1 > best.best_dev_f1) {
            best = probe;
            best.best_dev_f1 = f1;
            stale = 0;
        } else if (++stale >= config.patience) {
            ++epoch;
            break;
        }
    }
    best.epochs_run = std::min(epoch, config.max_epochs);
    best.seed = config.seed;
    return best;
}

enum class NegativePolicy {
    SameSentenceUniform,  // one grammatical word of the same sentence
    AllWords,             // every grammatical word of the sentence
    SamePos,              // one grammatical word with the error word's tag
};

inline NegativePolicy parse_negative_policy(const std::string& name) {
    if (name == "uniform") return NegativePolicy::SameSentenceUniform;
    if (name == "all") return NegativePolicy::AllWords;
    if (name == "same-pos") return NegativePolicy::SamePos;
    throw ConfigError("unknown negative policy '" + name + "'");
}

struct ProbeRows {
    // (sentence position in input, word, label)
    struct Row {
        std::size_t record;
        std::uint32_t word;
        int label;
    };
    std::vector<Row> rows;
    std::size_t positive_only_sentences = 0;
};

namespace detail {

inline const NoisePair& pair_for(const SentenceRecord& r, const std::vector<NoisePair>& pairs) {
    if (r.sentence_index >= pairs.size())
        throw SelectionError("no noise pair for sentence " + std::to_string(r.sentence_index));
    const auto& p = pairs[r.sentence_index];
    if (p.noisy.size() != r.word_count())
        throw SelectionError("sentence " + std::to_string(r.sentence_index) + " (" + p.id + "): pair has " +
                             std::to_string(p.noisy.size()) + " words, dump has " + std::to_string(r.word_count()));
    return p;
}

// Picks positive and negative words per sentence. Tags are only consulted
// by the same-pos policy, indexed like `pairs`.
inline ProbeRows choose_probe_rows(std::span<const SentenceRecord> records, const std::vector<NoisePair>& pairs,
                                   NegativePolicy policy, std::uint64_t seed,
                                   const std::vector<std::vector<PosTag>>* tags) {
    if (policy == NegativePolicy::SamePos && !tags) throw ConfigError("same-pos negatives need a tagged corpus");
    ProbeRows out;
    for (std::size_t ri = 0; ri < records.size(); ++ri) {
        const auto& r = records[ri];
        const auto& pair = pair_for(r, pairs);
        const auto target = pair.target_word();
        if (!target) throw SelectionError("pair " + pair.id + " has no changed word");
        out.rows.push_back({ri, *target, 1});

        std::vector<std::uint32_t> negatives;
        for (std::uint32_t w = 0; w < r.word_count(); ++w) {
            if (std::find(pair.error_indices.begin(), pair.error_indices.end(), w) != pair.error_indices.end()) continue;
            if (policy == NegativePolicy::SamePos) {
                const auto& t = (*tags).at(r.sentence_index);
                if (t.size() != r.word_count() || t[w] != t[*target]) continue;
            }
            negatives.push_back(w);
        }
        if (negatives.empty()) {
            ++out.positive_only_sentences;
            continue;
        }
        Rng rng(derive_seed(seed, std::uint64_t{r.sentence_index}));
        if (policy == NegativePolicy::AllWords) {
            for (auto w : negatives) out.rows.push_back({ri, w, 0});
        } else {
            out.rows.push_back({ri, negatives[rng.uniform_index(negatives.size())], 0});
        }
    }
    if (out.rows.empty()) throw DatasetError("probe dataset is empty");
    Rng shuffle_rng(derive_seed(seed, "probe-row-shuffle"));
    shuffle_rng.shuffle(std::span<ProbeRows::Row>(out.rows));
    return out;
}

inline ProbeDataset materialize(std::span<const SentenceRecord> records, const ProbeRows& chosen, std::size_t layer,
                                std::string split) {
    ProbeDataset ds;
    ds.split = std::move(split);
    const std::size_t d = records.empty() ? 0 : records.front().model_dim;
    ds.features.resize(static_cast<Eigen::Index>(chosen.rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < chosen.rows.size(); ++i) {
        const auto& row = chosen.rows[i];
        const auto& r = records[row.record];
        const auto state = r.word_state(layer, row.word);
        for (std::size_t c = 0; c < d; ++c)
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = state[c];
        ds.labels.push_back(row.label);
        ds.provenance.emplace_back(r.sentence_index, row.word);
    }
    return ds;
}

}  // namespace detail

// One positive row per noisy sentence (the error word's last-subword state
// at `layer`) and negatives chosen by `policy`, rows shuffled under `seed`.
inline ProbeDataset build_probe_dataset(std::span<const SentenceRecord> records, const std::vector<NoisePair>& pairs,
                                        std::size_t layer, NegativePolicy policy, std::uint64_t seed,
                                        const std::vector<std::vector<PosTag>>* tags = nullptr) {
    const auto chosen = detail::choose_probe_rows(records, pairs, policy, seed, tags);
    return detail::materialize(records, chosen, layer, "all");
}

struct ProbeSplits {
    double train = 0.7;
    double dev = 0.15;  // test gets the remainder

    void validate() const {
        if (!(train > 0 && dev > 0 && train + dev < 1)) throw ConfigError("probe splits need 0 < train, dev and train + dev < 1");
    }
};

struct LayerProbeResult {
    std::size_t layer = 0;
    double train_f1 = 0, dev_f1 = 0, test_f1 = 0;
    std::size_t n_train = 0, n_dev = 0, n_test = 0;
    LinearProbe probe;
};

struct ProbeCurveOptions {
    ProbeTrainConfig train;
    ProbeSplits splits;
    NegativePolicy negatives = NegativePolicy::SameSentenceUniform;
    const std::vector<std::vector<PosTag>>* tags = nullptr;
};

// Splits sentences into train/dev/test under the probe seed, then trains an
// independent probe on every layer 0..L and scores it on each split.
inline std::vector<LayerProbeResult> probe_curve(std::span<const SentenceRecord> records,
                                                 const std::vector<NoisePair>& pairs, const ProbeCurveOptions& options) {
    options.splits.validate();
    if (records.empty()) throw DatasetError("probe curve needs at least one sentence");
    const std::size_t n = records.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng(derive_seed(options.train.seed, "probe-split"));
    split_rng.shuffle(std::span<std::size_t>(order));
    const auto n_train = static_cast<std::size_t>(std::llround(options.splits.train * static_cast<double>(n)));
    const auto n_dev = static_cast<std::size_t>(std::llround(options.splits.dev * static_cast<double>(n)));
    if (n_train == 0 || n_dev == 0 || n_train + n_dev >= n)
        throw DatasetError("too few sentences (" + std::to_string(n) + ") for train/dev/test splits");

    std::vector<SentenceRecord> parts[3];
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t which = i < n_train ? 0 : (i < n_train + n_dev ? 1 : 2);
        parts[which].push_back(records[order[i]]);
    }
    for (auto& part : parts)
        std::sort(part.begin(), part.end(), [](const auto& a, const auto& b) { return a.sentence_index < b.sentence_index; });

    ProbeRows chosen[3];
    for (int s = 0; s < 3; ++s)
        chosen[s] = detail::choose_probe_rows(parts[s], pairs, options.negatives, options.train.seed, options.tags);

    std::vector<LayerProbeResult> curve;
    const std::size_t layers = records.front().num_layers;
    for (std::size_t layer = 0; layer <= layers; ++layer) {
        const auto train = detail::materialize(parts[0], chosen[0], layer, "train");
        const auto dev = detail::materialize(parts[1], chosen[1], layer, "dev");
        const auto test = detail::materialize(parts[2], chosen[2], layer, "test");
        LayerProbeResult res;
        res.layer = layer;
        res.probe = train_probe(train, dev, options.train);
        res.train_f1 = eval_f1(res.probe, train);
        res.dev_f1 = eval_f1(res.probe, dev);
        res.test_f1 = eval_f1(res.probe, test);
        res.n_train = train.size();
        res.n_dev = dev.size();
        res.n_test = test.size();
        curve.push_back(std::move(res));
    }
    return curve;
}

// Probe parameters share the encoder weight container: one 1 x d weight and
// one 1 x 1 bias tensor per layer.
inline void save_probes(const std::vector<LayerProbeResult>& curve, const nlohmann::json& meta,
                        const std::filesystem::path& path) {
    std::vector<MatrixRf> storage;
    storage.reserve(curve.size() * 2);
    std::vector<std::pair<std::string, const MatrixRf*>> tensors;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& r : curve) {
        storage.push_back(r.probe.weight.transpose().cast<float>());
        tensors.emplace_back("layer." + std::to_string(r.layer) + ".weight", &storage.back());
        storage.push_back(MatrixRf::Constant(1, 1, static_cast<float>(r.probe.bias)));
        tensors.emplace_back("layer." + std::to_string(r.layer) + ".bias", &storage.back());
        layers.push_back({{"layer", r.layer}, {"epochs_run", r.probe.epochs_run},
                          {"best_dev_f1", r.probe.best_dev_f1}, {"seed", r.probe.seed}});
    }
    detail::write_tensor_container(path, {{"kind", "linear_probe"}, {"config", meta}, {"layers", layers}}, tensors);
}

}  // namespace encaudit
