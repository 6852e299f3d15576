#pragma once

// Subcommands of the encaudit tool. Each takes a resolved RunConfig and
// returns a process exit code:
//   0 ok, 2 config error, 3 data error, 4 partial skip, 5 missing capability

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "encaudit/activation_store.hpp"
#include "encaudit/attn_pos.hpp"
#include "encaudit/config.hpp"
#include "encaudit/corpus.hpp"
#include "encaudit/encoder.hpp"
#include "encaudit/errors.hpp"
#include "encaudit/heads.hpp"
#include "encaudit/morpheus.hpp"
#include "encaudit/noise.hpp"
#include "encaudit/probe.hpp"
#include "encaudit/report.hpp"
#include "encaudit/similarity.hpp"

namespace encaudit {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitPartial = 4, kExitCapability = 5 };

inline int exit_code_for(const Error& e) {
    switch (e.category()) {
        case ErrorCategory::Config: return kExitConfig;
        case ErrorCategory::Capability: return kExitCapability;
        case ErrorCategory::Data:
        case ErrorCategory::Internal: return kExitData;
    }
    return kExitData;
}

// Report schemas, checked by `report`.
inline const std::map<std::string, std::vector<std::string>>& report_schemas() {
    static const std::map<std::string, std::vector<std::string>> schemas = {
        {"probe_report.csv", {"model_id", "error_type", "layer", "split", "f1", "n_examples"}},
        {"cka_report.csv", {"model_id", "error_type", "layer", "cka_distance", "n_examples"}},
        {"head_report.csv",
         {"model_id", "error_type", "layer", "head", "influence_distance", "robustness_distance", "batch_id"}},
        {"agreement_report.csv", {"model_id", "error_type", "layer", "accuracy", "n_batches", "batch_size"}},
        {"attnpos_report.csv",
         {"model_id", "error_type", "layer", "selected_head", "pos_tag", "mean_attention", "normalized_attention",
          "n_words"}},
    };
    return schemas;
}

namespace detail {

inline Provenance provenance(const RunConfig& cfg) { return {cfg.hash(), cfg.seeds(), {}}; }

inline void ensure_out(const RunConfig& cfg) { std::filesystem::create_directories(cfg.out); }

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline std::string error_name(const RunConfig& cfg) { return std::string(to_string(cfg.error_type)); }

// Clean-side word for each record: the first changed position of its pair.
inline WordSelector pair_word_selector(const std::vector<NoisePair>& pairs) {
    return WordSelector::resolve([&pairs](const SentenceRecord& r) -> std::optional<std::uint32_t> {
        if (r.sentence_index >= pairs.size()) return std::nullopt;
        return pairs[r.sentence_index].target_word();
    });
}

inline std::vector<std::vector<PosTag>> tags_by_pair(const std::vector<NoisePair>& pairs,
                                                     const std::vector<TaggedSentence>& corpus) {
    std::map<std::string, const TaggedSentence*> by_id;
    for (const auto& s : corpus) by_id.emplace(s.id, &s);
    std::vector<std::vector<PosTag>> tags;
    for (const auto& p : pairs) {
        auto it = by_id.find(p.id);
        tags.push_back(it == by_id.end() ? std::vector<PosTag>{} : it->second->tags);
    }
    return tags;
}

}  // namespace detail

inline int cmd_inject(const RunConfig& cfg) {
    const auto& corpus_path = cfg.require(cfg.corpus, "corpus");
    NoiseResources res;
    res.language = cfg.language;
    if (cfg.error_type == ErrorType::Article || cfg.error_type == ErrorType::Prep) {
        if (cfg.table) {
            res.table = ReplacementTable::load(cfg.require(cfg.table, "table"));
        } else if (cfg.uniform_table) {
            const auto lists = word_lists(cfg.language);
            res.table = ReplacementTable::uniform({lists.articles, lists.prepositions});
        } else {
            throw ConfigError("missing config key 'table' (or set uniform_table)");
        }
    } else if (cfg.error_type == ErrorType::Nounnum) {
        res.number_exceptions = NumberLexicon::load(cfg.require(cfg.number_exceptions, "number_exceptions"));
    } else {
        throw ConfigError("error type morpheus is produced by the 'attack' subcommand");
    }
    const auto corpus = read_corpus(corpus_path);
    const auto result = inject_corpus(corpus, cfg.error_type, res, cfg.seed);
    detail::ensure_out(cfg);
    write_jsonl(cfg.output("pairs.jsonl"), result.pairs);
    auto report = result.report.to_json();
    report["error_type"] = detail::error_name(cfg);
    report["seed"] = cfg.seed;
    detail::write_json(cfg.output("skip_report.json"), report);
    std::cerr << "inject: " << result.report.emitted << " pairs, " << result.report.skipped_total() << " skipped\n";
    return kExitOk;
}

inline std::unique_ptr<Scorer> make_scorer(const RunConfig& cfg) {
    if (cfg.scorer.kind == "lookup") {
        if (!cfg.scorer.table) throw ConfigError("missing config key 'scorer.table'");
        if (!std::filesystem::exists(*cfg.scorer.table)) throw ConfigError("config key 'scorer.table': no such path");
        return std::make_unique<LookupScorer>(LookupScorer::load(*cfg.scorer.table));
    }
    if (cfg.scorer.kind == "process") {
        if (cfg.scorer.command.empty()) throw ConfigError("missing config key 'scorer.command'");
        return std::make_unique<ProcessScorer>(
            cfg.scorer.command, std::chrono::milliseconds(static_cast<long long>(cfg.scorer.timeout_s * 1000)));
    }
    throw ConfigError("unknown scorer kind '" + cfg.scorer.kind + "'");
}

inline int cmd_attack(const RunConfig& cfg) {
    const auto corpus = read_corpus(cfg.require(cfg.corpus, "corpus"));
    const auto lexicon = InflectionLexicon::load(cfg.require(cfg.lexicon, "lexicon"));
    auto scorer = make_scorer(cfg);
    std::vector<NoisePair> pairs;
    SkipReport report;
    report.total = corpus.size();
    for (const auto& s : corpus) {
        auto pair = morpheus_attack(s, *scorer, lexicon);
        if (pair.error_indices.empty()) {
            ++report.skipped[std::string(skip::kUnchanged)];
            continue;
        }
        pairs.push_back(std::move(pair));
    }
    report.emitted = pairs.size();
    detail::ensure_out(cfg);
    write_jsonl(cfg.output("pairs.jsonl"), pairs);
    auto j = report.to_json();
    j["error_type"] = "morpheus";
    detail::write_json(cfg.output("skip_report.json"), j);
    std::cerr << "attack: " << pairs.size() << " sentences changed of " << corpus.size() << "\n";
    return kExitOk;
}

namespace detail {

inline SentenceRecord trace_record(const EncoderWeights& w, const TokenizedSentence& tok, std::uint32_t index,
                                   std::optional<std::uint32_t> target) {
    const auto& cfg = w.config;
    const auto trace = forward(w, tok);
    SentenceRecord r;
    r.sentence_index = index;
    r.token_count = static_cast<std::uint32_t>(tok.ids.size());
    r.word_spans = tok.word_spans;
    r.target_word = target;
    r.num_layers = cfg.num_layers;
    r.num_heads = cfg.num_heads;
    r.model_dim = cfg.model_dim;
    for (const auto& h : trace.hidden_states) r.hidden_states.insert(r.hidden_states.end(), h.data(), h.data() + h.size());
    for (const auto& layer : trace.attentions)
        for (const auto& a : layer) r.attentions.insert(r.attentions.end(), a.data(), a.data() + a.size());
    if (target) {
        // only layer j has to be recomputed to get the layer-(j+1) state
        const auto token = static_cast<Eigen::Index>(tok.word_spans[*target].end - 1);
        for (std::uint32_t j = 0; j < cfg.num_layers; ++j) {
            for (std::uint32_t h = 0; h < cfg.num_heads; ++h) {
                const MatrixRf out = encoder_layer(w, j, trace.hidden_states[j], HeadMask{{j, h}});
                r.ablations.insert(r.ablations.end(), out.row(token).data(), out.row(token).data() + out.cols());
            }
        }
    }
    return r;
}

}  // namespace detail

inline int cmd_trace(const RunConfig& cfg) {
    const auto& pairs_path = cfg.require(cfg.pairs, "pairs");
    const auto vocab = Vocabulary::load(cfg.require(cfg.vocab, "vocab"));
    const auto pairs = read_noise_pairs(pairs_path);
    detail::ensure_out(cfg);

    EncoderWeights weights;
    if (cfg.weights) {
        weights = load_weights(cfg.require(cfg.weights, "weights"));
        if (weights.config.vocab_size != vocab.size())
            throw ConfigError("weights were built for " + std::to_string(weights.config.vocab_size) +
                              " tokens, vocabulary has " + std::to_string(vocab.size()));
    } else {
        EncoderConfig ec = cfg.encoder;
        ec.vocab_size = static_cast<std::uint32_t>(vocab.size());
        weights = init_seeded(ec);
        save_weights(weights, cfg.output("encoder.encw"));
    }

    // Tokenize everything first so the dump headers know the sentence count.
    struct Prepared {
        std::uint32_t index;
        TokenizedSentence clean, noisy;
    };
    std::vector<Prepared> ready;
    nlohmann::json errors = nlohmann::json::array();
    for (std::uint32_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        try {
            if (!p.target_word()) throw SelectionError("pair has no changed word");
            Prepared prep{i, tokenize(p.clean, vocab), tokenize(p.noisy, vocab)};
            for (const auto* t : {&prep.clean, &prep.noisy})
                if (t->ids.size() > weights.config.max_positions)
                    throw LengthError(std::to_string(t->ids.size()) + " tokens exceed max_positions " +
                                      std::to_string(weights.config.max_positions));
            ready.push_back(std::move(prep));
        } catch (const Error& e) {
            errors.push_back({{"sentence_index", i}, {"id", p.id}, {"error", e.what()}});
        }
    }

    DumpHeader header;
    header.model_id = cfg.model_id;
    header.num_layers = weights.config.num_layers;
    header.num_heads = weights.config.num_heads;
    header.model_dim = weights.config.model_dim;
    header.has_attention = true;
    header.has_ablations = true;
    header.sentence_count = ready.size();
    header.meta = {{"source", "toy-encoder"}, {"error_type", detail::error_name(cfg)}, {"encoder", weights.config}};

    DumpHeader noisy_header = header, clean_header = header;
    noisy_header.meta["side"] = "noisy";
    clean_header.meta["side"] = "clean";
    DumpWriter noisy(*cfg.noisy_dump, noisy_header);
    DumpWriter clean(*cfg.clean_dump, clean_header);
    for (const auto& prep : ready) {
        const auto target = pairs[prep.index].target_word();
        noisy.write(detail::trace_record(weights, prep.noisy, prep.index, target));
        clean.write(detail::trace_record(weights, prep.clean, prep.index, target));
    }
    noisy.finish();
    clean.finish();
    detail::write_json(cfg.output("trace_errors.json"), {{"traced", ready.size()}, {"skipped", errors}});
    std::cerr << "trace: " << ready.size() << " sentence pairs traced, " << errors.size() << " skipped\n";
    return errors.empty() ? kExitOk : kExitPartial;
}

inline int cmd_probe(const RunConfig& cfg) {
    const auto pairs = read_noise_pairs(cfg.require(cfg.pairs, "pairs"));
    DumpReader reader(cfg.require(cfg.noisy_dump, "noisy_dump"));
    std::vector<SentenceRecord> records;
    while (auto r = reader.next()) {
        r->attentions.clear();
        r->attentions.shrink_to_fit();
        r->ablations.clear();
        r->ablations.shrink_to_fit();
        records.push_back(std::move(*r));
    }
    ProbeCurveOptions opts;
    opts.train = cfg.probe;
    opts.splits = cfg.splits;
    opts.negatives = cfg.negatives;
    std::vector<std::vector<PosTag>> tags;
    if (cfg.negatives == NegativePolicy::SamePos) {
        tags = detail::tags_by_pair(pairs, read_corpus(cfg.require(cfg.corpus, "corpus")));
        opts.tags = &tags;
    }
    const auto curve = probe_curve(records, pairs, opts);

    detail::ensure_out(cfg);
    auto prov = detail::provenance(cfg);
    CsvWriter csv(cfg.output("probe_report.csv"), report_schemas().at("probe_report.csv"), prov);
    for (const auto& r : curve) {
        const std::pair<const char*, std::pair<double, std::size_t>> rows[] = {
            {"train", {r.train_f1, r.n_train}}, {"dev", {r.dev_f1, r.n_dev}}, {"test", {r.test_f1, r.n_test}}};
        for (const auto& [split, v] : rows)
            csv.row({cfg.model_id, detail::error_name(cfg), std::to_string(r.layer), split, format_real(v.first),
                     std::to_string(v.second)});
    }
    save_probes(curve, {{"model_id", cfg.model_id}, {"error_type", detail::error_name(cfg)}, {"probe", cfg.probe}},
                cfg.output("probes.encw"));
    return kExitOk;
}

// Per-layer 1 - CKA between the error word in the noisy dump and its clean
// form in the clean dump.
inline std::vector<std::pair<std::size_t, double>> cka_curve(const std::filesystem::path& noisy_dump,
                                                             const std::filesystem::path& clean_dump,
                                                             const std::vector<NoisePair>* pairs,
                                                             std::size_t* n_examples = nullptr) {
    const auto layers = DumpReader(noisy_dump).header().num_layers;
    if (DumpReader(clean_dump).header().num_layers != layers)
        throw SelectionError("noisy and clean dumps have different layer counts");
    std::vector<std::pair<std::size_t, double>> curve;
    for (std::size_t l = 0; l <= layers; ++l) {
        const auto noisy = extract_word_matrix(noisy_dump, l, WordSelector::target());
        const auto clean = extract_word_matrix(clean_dump, l, pairs ? detail::pair_word_selector(*pairs) : WordSelector::target());
        if (n_examples) *n_examples = static_cast<std::size_t>(noisy.rows());
        curve.emplace_back(l, cka_distance(noisy, clean));
    }
    return curve;
}

inline int cmd_cka(const RunConfig& cfg) {
    const auto& noisy = cfg.require(cfg.noisy_dump, "noisy_dump");
    const auto& clean = cfg.require(cfg.clean_dump, "clean_dump");
    std::optional<std::vector<NoisePair>> pairs;
    if (cfg.pairs && std::filesystem::exists(*cfg.pairs)) pairs = read_noise_pairs(*cfg.pairs);
    std::size_t n = 0;
    const auto curve = cka_curve(noisy, clean, pairs ? &*pairs : nullptr, &n);
    detail::ensure_out(cfg);
    CsvWriter csv(cfg.output("cka_report.csv"), report_schemas().at("cka_report.csv"), detail::provenance(cfg));
    for (const auto& [layer, dist] : curve)
        csv.row({cfg.model_id, detail::error_name(cfg), std::to_string(layer), format_real(dist), std::to_string(n)});
    return kExitOk;
}

inline nlohmann::json selection_json(const HeadSelection& sel) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t l = 0; l < sel.heads.size(); ++l)
        rows.push_back({{"layer", l + 1}, {"head_layer", l}, {"head", sel.heads[l]}});
    return rows;
}

inline int cmd_heads(const RunConfig& cfg) {
    const auto& noisy = cfg.require(cfg.noisy_dump, "noisy_dump");
    const auto& clean = cfg.require(cfg.clean_dump, "clean_dump");
    const auto pairs = read_noise_pairs(cfg.require(cfg.pairs, "pairs"));
    const auto samples = load_head_samples(noisy, clean, &pairs);
    const auto report = agreement_accuracy(samples, cfg.batch_size);

    detail::ensure_out(cfg);
    auto prov = detail::provenance(cfg);
    prov.notes.push_back("layer = representation layer l; head indexes the heads of encoder layer l-1");
    prov.notes.push_back("accuracy = fraction of consecutive batches of batch_size sentences whose influential and "
                         "robustness argmax heads coincide");
    {
        CsvWriter csv(cfg.output("head_report.csv"), report_schemas().at("head_report.csv"), prov);
        for (std::size_t b = 0; b < report.n_batches; ++b)
            for (std::size_t l = 0; l < report.influence[b].scores.size(); ++l)
                for (std::size_t h = 0; h < report.influence[b].scores[l].size(); ++h)
                    csv.row({cfg.model_id, detail::error_name(cfg), std::to_string(l + 1), std::to_string(h),
                             format_real(report.influence[b].scores[l][h]),
                             format_real(report.robustness[b].scores[l][h]), std::to_string(b)});
    }
    {
        CsvWriter csv(cfg.output("agreement_report.csv"), report_schemas().at("agreement_report.csv"), prov);
        for (std::size_t l = 0; l < report.accuracy.size(); ++l)
            csv.row({cfg.model_id, detail::error_name(cfg), std::to_string(l + 1), format_real(report.accuracy[l]),
                     std::to_string(report.n_batches), std::to_string(report.batch_size)});
    }
    const auto all_inf = select_heads(score_table(samples, HeadKind::Influential));
    const auto all_rob = select_heads(score_table(samples, HeadKind::Robustness));
    detail::write_json(cfg.output("head_selection.json"),
                       {{"influential", selection_json(all_inf)}, {"robustness", selection_json(all_rob)},
                        {"n_sentences", samples.size()}});
    return kExitOk;
}

inline int cmd_attnpos(const RunConfig& cfg) {
    const auto& noisy = cfg.require(cfg.noisy_dump, "noisy_dump");
    const auto& clean = cfg.require(cfg.clean_dump, "clean_dump");
    const auto pairs = read_noise_pairs(cfg.require(cfg.pairs, "pairs"));
    const auto corpus = read_corpus(cfg.require(cfg.corpus, "corpus"));
    if (!DumpReader(noisy).header().has_attention)
        throw CapabilityError(noisy.string() + " was written without has_attention");
    const auto samples = load_head_samples(noisy, clean, &pairs);
    if (samples.size() < 2) throw DatasetError("robustness head selection needs at least 2 sentences");
    const auto selection = select_heads(score_table(samples, HeadKind::Robustness));
    const auto profile = pos_profile(noisy, pairs, corpus, selection, {cfg.top_k, cfg.exclude_self});

    detail::ensure_out(cfg);
    auto prov = detail::provenance(cfg);
    prov.notes.push_back("selected_head = robustness head of encoder layer (layer-1), chosen over all sentences");
    CsvWriter csv(cfg.output("attnpos_report.csv"), report_schemas().at("attnpos_report.csv"), prov);
    for (std::size_t l = 0; l < profile.mean.size(); ++l)
        for (std::size_t t = 0; t < profile.tags.size(); ++t)
            csv.row({cfg.model_id, detail::error_name(cfg), std::to_string(l + 1),
                     std::to_string(profile.selected_heads[l]), std::string(to_string(profile.tags[t])),
                     format_real(profile.mean[l][t]), format_real(profile.normalized[l][t]),
                     std::to_string(profile.n_words[l][t])});
    return kExitOk;
}

inline void validate_report_schema(const CsvTable& table, const std::vector<std::string>& columns,
                                   const std::string& name) {
    if (table.columns != columns) throw FormatError(name + ": unexpected columns");
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto& col = columns[c];
            const bool numeric = col != "model_id" && col != "error_type" && col != "split" && col != "pos_tag";
            if (!numeric) continue;
            try {
                std::size_t used = 0;
                (void)std::stod(row[c], &used);
                if (used != row[c].size()) throw std::invalid_argument("trailing");
            } catch (const std::logic_error&) {
                throw FormatError(name + ": column " + col + " holds non-numeric value '" + row[c] + "'");
            }
        }
    }
}

inline int cmd_report(const RunConfig& cfg, bool svg) {
    nlohmann::json manifest = {{"tool", "encaudit"}, {"version", std::string(kToolVersion)},
                               {"config_hash", cfg.hash()}, {"seeds", cfg.seeds()},
                               {"model_id", cfg.model_id}, {"error_type", detail::error_name(cfg)},
                               {"config", cfg.merged}, {"reports", nlohmann::json::object()}};
    std::map<std::string, CsvTable> tables;
    for (const auto& [name, columns] : report_schemas()) {
        const auto path = cfg.output(name);
        if (!std::filesystem::exists(path)) {
            manifest["reports"][name] = {{"present", false}};
            continue;
        }
        auto table = read_csv(path);
        validate_report_schema(table, columns, name);
        manifest["reports"][name] = {{"present", true}, {"rows", table.rows.size()}, {"columns", columns}};
        tables.emplace(name, std::move(table));
    }
    if (tables.empty()) throw ConfigError("no reports found in " + cfg.out.string());

    if (svg) {
        auto write_text = [&](const std::string& file, const std::string& text) {
            std::ofstream out(cfg.output(file), std::ios::binary);
            out << text;
            manifest["figures"].push_back(file);
        };
        auto num = [](const std::string& s) { return std::stod(s); };
        if (auto it = tables.find("probe_report.csv"); it != tables.end()) {
            std::map<std::string, svg::Series> by_split;
            const auto& t = it->second;
            for (const auto& row : t.rows) {
                auto& s = by_split[row[t.column("split")]];
                s.name = row[t.column("split")];
                s.points.emplace_back(num(row[t.column("layer")]), num(row[t.column("f1")]));
            }
            std::vector<svg::Series> series;
            for (auto& [_, s] : by_split) series.push_back(s);
            write_text("probe_f1.svg", svg::line_chart("GED probe F1 per layer", "layer", "F1", series));
        }
        if (auto it = tables.find("cka_report.csv"); it != tables.end()) {
            svg::Series s{"cka distance", {}};
            const auto& t = it->second;
            for (const auto& row : t.rows)
                s.points.emplace_back(num(row[t.column("layer")]), num(row[t.column("cka_distance")]));
            write_text("cka_distance.svg", svg::line_chart("CKA distance, noisy vs clean word", "layer", "1 - CKA", {s}));
        }
        if (auto it = tables.find("agreement_report.csv"); it != tables.end()) {
            svg::Series s{"accuracy", {}};
            const auto& t = it->second;
            for (const auto& row : t.rows)
                s.points.emplace_back(num(row[t.column("layer")]), num(row[t.column("accuracy")]));
            write_text("agreement.svg",
                       svg::line_chart("Influential vs robustness head agreement", "layer", "accuracy", {s}));
        }
        if (auto it = tables.find("attnpos_report.csv"); it != tables.end()) {
            const auto& t = it->second;
            std::vector<std::string> rows, cols;
            std::map<std::pair<std::string, std::string>, double> cells;
            for (const auto& row : t.rows) {
                const auto& layer = row[t.column("layer")];
                const auto& tag = row[t.column("pos_tag")];
                if (std::find(rows.begin(), rows.end(), layer) == rows.end()) rows.push_back(layer);
                if (std::find(cols.begin(), cols.end(), tag) == cols.end()) cols.push_back(tag);
                cells[{layer, tag}] = num(row[t.column("normalized_attention")]);
            }
            std::vector<std::vector<double>> values(rows.size(), std::vector<double>(cols.size(), 0.0));
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < cols.size(); ++c) values[r][c] = cells[{rows[r], cols[c]}];
            std::vector<std::string> row_labels;
            for (const auto& r : rows) row_labels.push_back("layer " + r);
            write_text("attnpos_heatmap.svg", svg::heatmap("Robustness head attention by POS tag", row_labels, cols, values));
        }
    }
    detail::write_json(cfg.output("manifest.json"), manifest);
    return kExitOk;
}

// Entry point shared by the encaudit binary and the tests.
inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"encaudit: grammatical-error robustness analysis for translation encoders"};
    app.require_subcommand(1);
    std::optional<std::string> config_path;
    FlagOverrides flags;
    bool svg = false;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", flags.seed, "master seed");
    app.add_option("--out", flags.out, "output directory");
    app.add_option("--error-type", flags.error_type, "article|prep|nounnum|morpheus");
    app.add_option("--batch-size", flags.batch_size, "sentences per head-agreement batch");
    app.add_flag("--exclude-self", flags.exclude_self, "drop the error word's attention to itself");
    app.add_option("--noisy-dump", flags.noisy_dump, "noisy activation dump");
    app.add_option("--clean-dump", flags.clean_dump, "clean activation dump");
    app.add_option("--pairs", flags.pairs, "noise-pair file");
    app.fallthrough();

    auto* inject = app.add_subcommand("inject", "insert one grammatical error per sentence");
    auto* attack = app.add_subcommand("attack", "greedy inflectional attack against a scorer");
    auto* trace = app.add_subcommand("trace", "run the toy encoder and write activation dumps");
    auto* probe = app.add_subcommand("probe", "train per-layer error detection probes");
    auto* cka = app.add_subcommand("cka", "per-layer CKA distance between noisy and clean words");
    auto* heads = app.add_subcommand("heads", "influential/robustness heads and their agreement");
    auto* attnpos = app.add_subcommand("attnpos", "robustness-head attention by POS tag");
    auto* report = app.add_subcommand("report", "validate reports and write the run manifest");
    report->add_flag("--svg", svg, "also render SVG figures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        const auto cfg = load_config(config_path ? std::optional<std::filesystem::path>(*config_path) : std::nullopt, flags);
        if (inject->parsed()) return cmd_inject(cfg);
        if (attack->parsed()) return cmd_attack(cfg);
        if (trace->parsed()) return cmd_trace(cfg);
        if (probe->parsed()) return cmd_probe(cfg);
        if (cka->parsed()) return cmd_cka(cfg);
        if (heads->parsed()) return cmd_heads(cfg);
        if (attnpos->parsed()) return cmd_attnpos(cfg);
        if (report->parsed()) return cmd_report(cfg, svg);
    } catch (const Error& e) {
        std::cerr << "encaudit: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "encaudit: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace encaudit
