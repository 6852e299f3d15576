#pragma once

// Run configuration. Values are layered, later layers winning:
//   built-in defaults < config file < ENCAUDIT_* environment < CLI flags
// Relative paths in a config file are resolved against the file's directory.

#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "encaudit/corpus.hpp"
#include "encaudit/encoder.hpp"
#include "encaudit/errors.hpp"
#include "encaudit/probe.hpp"
#include "encaudit/rng.hpp"

namespace encaudit {

inline constexpr std::string_view kEnvPrefix = "ENCAUDIT_";

// Top-level keys holding filesystem paths.
inline const std::vector<std::string>& path_keys() {
    static const std::vector<std::string> keys = {"out",   "corpus",     "pairs",      "table",  "number_exceptions",
                                                  "lexicon", "vocab",    "weights",    "noisy_dump", "clean_dump"};
    return keys;
}

// Top-level scalar keys that may come from the environment.
inline const std::vector<std::string>& env_keys() {
    static const std::vector<std::string> keys = {
        "model_id", "language",   "error_type", "seed",       "out",       "corpus",   "pairs",
        "table",    "number_exceptions", "lexicon", "vocab", "weights", "noisy_dump", "clean_dump",
        "batch_size", "top_k",    "exclude_self", "uniform_table", "negatives"};
    return keys;
}

inline nlohmann::json default_config() {
    return {{"model_id", "toy"},
            {"language", "en"},
            {"error_type", "article"},
            {"seed", 0},
            {"out", "out"},
            {"uniform_table", false},
            {"batch_size", 256},
            {"top_k", 10},
            {"exclude_self", false},
            {"negatives", "uniform"},
            {"encoder", {{"num_layers", 2}, {"num_heads", 2}, {"model_dim", 16}, {"ffn_dim", 64}, {"max_positions", 128}}},
            {"probe", nlohmann::json::object()},
            {"splits", {{"train", 0.7}, {"dev", 0.15}}},
            {"scorer", {{"kind", "lookup"}, {"timeout_s", 60}}}};
}

namespace detail {

inline void merge_into(nlohmann::json& base, const nlohmann::json& layer) {
    for (auto it = layer.begin(); it != layer.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
            merge_into(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
}

inline nlohmann::json parse_scalar_like(const std::string& text, const nlohmann::json& like) {
    try {
        if (like.is_boolean()) {
            if (text == "1" || text == "true" || text == "yes") return true;
            if (text == "0" || text == "false" || text == "no") return false;
            throw ConfigError("expected a boolean, got '" + text + "'");
        }
        if (like.is_number_unsigned()) return std::stoull(text);
        if (like.is_number_integer()) return std::stoll(text);
        if (like.is_number_float()) return std::stod(text);
    } catch (const std::logic_error&) {
        throw ConfigError("cannot parse '" + text + "'");
    }
    return text;
}

}  // namespace detail

struct ScorerSettings {
    std::string kind = "lookup";  // lookup | process
    std::optional<std::filesystem::path> table;
    std::vector<std::string> command;
    double timeout_s = 60;
};

struct RunConfig {
    nlohmann::json merged;  // the fully layered configuration

    std::string model_id;
    std::string language;
    ErrorType error_type = ErrorType::Article;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    std::optional<std::filesystem::path> corpus, pairs, table, number_exceptions, lexicon, vocab, weights, noisy_dump,
        clean_dump;
    bool uniform_table = false;
    std::size_t batch_size = 256;
    std::size_t top_k = 10;
    bool exclude_self = false;
    NegativePolicy negatives = NegativePolicy::SameSentenceUniform;
    EncoderConfig encoder;
    ProbeTrainConfig probe;
    ProbeSplits splits;
    ScorerSettings scorer;

    // Hex FNV-1a of the merged configuration (keys are sorted by the JSON
    // library, so equal configs hash equally).
    std::string hash() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(merged.dump())));
        return buf;
    }

    nlohmann::json seeds() const {
        return {{"seed", seed}, {"probe_seed", probe.seed}, {"encoder_seed", encoder.seed}};
    }

    std::filesystem::path output(const std::string& name) const { return out / name; }

    const std::filesystem::path& require(const std::optional<std::filesystem::path>& p, const std::string& key) const {
        if (!p) throw ConfigError("missing config key '" + key + "'");
        if (!std::filesystem::exists(*p)) throw ConfigError("config key '" + key + "': no such path " + p->string());
        return *p;
    }
};

inline RunConfig resolve_config(const nlohmann::json& merged) {
    RunConfig c;
    c.merged = merged;
    try {
        c.model_id = merged.at("model_id").get<std::string>();
        c.language = merged.at("language").get<std::string>();
        c.error_type = parse_error_type(merged.at("error_type").get<std::string>());
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.out = merged.at("out").get<std::string>();
        auto opt_path = [&](const char* key) -> std::optional<std::filesystem::path> {
            if (!merged.contains(key) || merged[key].is_null()) return std::nullopt;
            return std::filesystem::path(merged[key].get<std::string>());
        };
        c.corpus = opt_path("corpus");
        c.pairs = opt_path("pairs");
        c.table = opt_path("table");
        c.number_exceptions = opt_path("number_exceptions");
        c.lexicon = opt_path("lexicon");
        c.vocab = opt_path("vocab");
        c.weights = opt_path("weights");
        c.noisy_dump = opt_path("noisy_dump");
        c.clean_dump = opt_path("clean_dump");
        c.uniform_table = merged.at("uniform_table").get<bool>();
        c.batch_size = merged.at("batch_size").get<std::size_t>();
        c.top_k = merged.at("top_k").get<std::size_t>();
        c.exclude_self = merged.at("exclude_self").get<bool>();
        c.negatives = parse_negative_policy(merged.at("negatives").get<std::string>());

        nlohmann::json enc = merged.at("encoder");
        if (!enc.contains("seed")) enc["seed"] = c.seed;
        c.encoder = enc.get<EncoderConfig>();
        nlohmann::json probe = merged.at("probe");
        if (!probe.contains("seed")) probe["seed"] = c.seed;
        c.probe = probe.get<ProbeTrainConfig>();
        c.probe.validate();
        c.splits.train = merged.at("splits").value("train", 0.7);
        c.splits.dev = merged.at("splits").value("dev", 0.15);
        c.splits.validate();

        const auto& sc = merged.at("scorer");
        c.scorer.kind = sc.value("kind", std::string("lookup"));
        if (sc.contains("table") && !sc["table"].is_null()) c.scorer.table = sc["table"].get<std::string>();
        if (sc.contains("command")) c.scorer.command = sc["command"].get<std::vector<std::string>>();
        c.scorer.timeout_s = sc.value("timeout_s", 60.0);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    if (c.batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (c.top_k < 1) throw ConfigError("top_k must be >= 1");
    return c;
}

// Overrides from the command line, already parsed; nullopt means unset.
struct FlagOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> error_type;
    std::optional<std::size_t> batch_size;
    bool exclude_self = false;
    std::optional<std::string> noisy_dump, clean_dump, pairs;
};

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    const auto base = std::filesystem::absolute(path).parent_path();
    auto rebase = [&](nlohmann::json& v) {
        if (v.is_string() && !v.get<std::string>().empty() && std::filesystem::path(v.get<std::string>()).is_relative())
            v = (base / v.get<std::string>()).lexically_normal().string();
    };
    for (const auto& key : path_keys())
        if (j.contains(key)) rebase(j[key]);
    if (j.contains("scorer") && j["scorer"].contains("table")) rebase(j["scorer"]["table"]);
    return j;
}

inline RunConfig load_config(const std::optional<std::filesystem::path>& file, const FlagOverrides& flags,
                             const char* const* environ_override = nullptr) {
    nlohmann::json merged = default_config();
    if (file) detail::merge_into(merged, read_config_file(*file));

    for (const auto& key : env_keys()) {
        std::string var(kEnvPrefix);
        for (char ch : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        const char* value = nullptr;
        if (environ_override) {
            const std::string prefix = var + "=";
            for (auto e = environ_override; *e; ++e)
                if (std::string_view(*e).substr(0, prefix.size()) == prefix) value = *e + prefix.size();
        } else {
            value = std::getenv(var.c_str());
        }
        if (!value) continue;
        const nlohmann::json like = merged.contains(key) ? merged[key] : nlohmann::json(std::string());
        merged[key] = detail::parse_scalar_like(value, like);
    }

    if (flags.seed) merged["seed"] = *flags.seed;
    if (flags.out) merged["out"] = *flags.out;
    if (flags.error_type) merged["error_type"] = *flags.error_type;
    if (flags.batch_size) merged["batch_size"] = *flags.batch_size;
    if (flags.exclude_self) merged["exclude_self"] = true;
    if (flags.noisy_dump) merged["noisy_dump"] = *flags.noisy_dump;
    if (flags.clean_dump) merged["clean_dump"] = *flags.clean_dump;
    if (flags.pairs) merged["pairs"] = *flags.pairs;

    // outputs of earlier stages are the default inputs of later ones
    const std::filesystem::path out = merged["out"].get<std::string>();
    if (!merged.contains("pairs")) merged["pairs"] = (out / "pairs.jsonl").string();
    if (!merged.contains("noisy_dump")) merged["noisy_dump"] = (out / "noisy.nmtd").string();
    if (!merged.contains("clean_dump")) merged["clean_dump"] = (out / "clean.nmtd").string();
    return resolve_config(merged);
}

}  // namespace encaudit
