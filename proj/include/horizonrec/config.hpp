// Training configuration and the flat `key = value` config file format.
// Keys mirror the TrainConfig field names; unknown keys are rejected so
// typos do not silently fall back to defaults.
#pragma once

#include <map>
#include <string>

#include "horizonrec/common.hpp"

namespace horizonrec {

enum class Variant {
    kFull,
    kDpdS,       // diffusion on the source representation only
    kDpdT,       // diffusion on the target representation only
    kNoDpd,      // target-only diffusion without mixed-domain conditioning
    kNoMdr,      // standard Gaussian noise instead of retrieved noise
    kNoDms,      // diffusion removed, static representations
    kNoDpdMdr,   // both removed: plain concat-MLP base recommender
};

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kFull: return "full";
        case Variant::kDpdS: return "DPD_S";
        case Variant::kDpdT: return "DPD_T";
        case Variant::kNoDpd: return "no_DPD";
        case Variant::kNoMdr: return "no_MDR";
        case Variant::kNoDms: return "no_DMs";
        case Variant::kNoDpdMdr: return "no_DPD_MDR";
    }
    return "full";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::kFull, Variant::kDpdS, Variant::kDpdT, Variant::kNoDpd,
                      Variant::kNoMdr, Variant::kNoDms, Variant::kNoDpdMdr})
        if (variant_name(v) == s) return v;
    fail("unknown ablation variant: " + s);
}

struct TrainConfig {
    double w = 0.5;             // fusion weight toward the base representation
    double lambda = 0.5;        // diffusion loss weight
    int K = 10;                 // retrieved segments per query
    int T = 32;                 // diffusion steps
    int batch_size = 512;
    int d = 64;                 // embedding width
    int max_len = 200;
    double learning_rate = 1e-3;
    int epochs = 200;
    uint64_t seed = 0;
    Variant variant = Variant::kFull;

    int layers = 1;
    double dropout = 0.2;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double c = 1.5;             // low-pass filter initial weight level
    double n = 2.0;             // low-pass filter decay rate
    int window = 200;           // candidate segment window
    int patience = 20;          // early stop epochs without val NDCG@10 gain
    bool freeze_encoders = false;
    uint64_t eval_seed = 9001;  // fixed seed for inference-time noise

    void validate() const {
        if (w < 0.0 || w > 1.0) fail("config: w must lie in [0,1]");
        if (lambda < 0.0) fail("config: lambda must be >= 0");
        if (K < 1) fail("config: K must be >= 1");
        if (T < 1) fail("config: T must be >= 1");
        if (batch_size < 1 || d < 1 || max_len < 1 || epochs < 0 || layers < 1)
            fail("config: batch_size, d, max_len, epochs, layers must be positive");
        if (dropout < 0.0 || dropout >= 1.0) fail("config: dropout must lie in [0,1)");
        if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
            fail("config: beta range must satisfy 0 < beta_start <= beta_end < 1");
        if (c <= 1.0) fail("config: c must be > 1");
        if (n < 1.0) fail("config: n must be >= 1");
        if (window < 1) fail("config: window must be >= 1");
    }
};

// Flat key-value document: one `key = value` per line, `#` comments.
inline std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    int lineno = 0;
    for (const auto& raw : split(text, '\n')) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) fail(strfmt("config line %d: expected key = value", lineno));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(strfmt("config line %d: empty key", lineno));
        kv[key] = value;
    }
    return kv;
}

inline void apply_config_kv(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        if (key == "w") cfg.w = std::stod(value);
        else if (key == "lambda") cfg.lambda = std::stod(value);
        else if (key == "K") cfg.K = std::stoi(value);
        else if (key == "T") cfg.T = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "d") cfg.d = std::stoi(value);
        else if (key == "max_len") cfg.max_len = std::stoi(value);
        else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
        else if (key == "epochs") cfg.epochs = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "variant") cfg.variant = parse_variant(value);
        else if (key == "layers") cfg.layers = std::stoi(value);
        else if (key == "dropout") cfg.dropout = std::stod(value);
        else if (key == "beta_start") cfg.beta_start = std::stod(value);
        else if (key == "beta_end") cfg.beta_end = std::stod(value);
        else if (key == "c") cfg.c = std::stod(value);
        else if (key == "n") cfg.n = std::stod(value);
        else if (key == "window") cfg.window = std::stoi(value);
        else if (key == "patience") cfg.patience = std::stoi(value);
        else if (key == "freeze_encoders") cfg.freeze_encoders = (value == "true" || value == "1");
        else if (key == "eval_seed") cfg.eval_seed = std::stoull(value);
        else fail("config: unknown key: " + key);
    }
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
    TrainConfig cfg;
    apply_config_kv(cfg, parse_kv_text(read_file(path)));
    cfg.validate();
    return cfg;
}

inline std::string config_to_text(const TrainConfig& c) {
    std::string out;
    out += strfmt("w = %.17g\n", c.w);
    out += strfmt("lambda = %.17g\n", c.lambda);
    out += strfmt("K = %d\n", c.K);
    out += strfmt("T = %d\n", c.T);
    out += strfmt("batch_size = %d\n", c.batch_size);
    out += strfmt("d = %d\n", c.d);
    out += strfmt("max_len = %d\n", c.max_len);
    out += strfmt("learning_rate = %.17g\n", c.learning_rate);
    out += strfmt("epochs = %d\n", c.epochs);
    out += strfmt("seed = %llu\n", static_cast<unsigned long long>(c.seed));
    out += strfmt("variant = %s\n", variant_name(c.variant).c_str());
    out += strfmt("layers = %d\n", c.layers);
    out += strfmt("dropout = %.17g\n", c.dropout);
    out += strfmt("beta_start = %.17g\n", c.beta_start);
    out += strfmt("beta_end = %.17g\n", c.beta_end);
    out += strfmt("c = %.17g\n", c.c);
    out += strfmt("n = %.17g\n", c.n);
    out += strfmt("window = %d\n", c.window);
    out += strfmt("patience = %d\n", c.patience);
    out += strfmt("freeze_encoders = %s\n", c.freeze_encoders ? "true" : "false");
    out += strfmt("eval_seed = %llu\n", static_cast<unsigned long long>(c.eval_seed));
    return out;
}

}  // namespace horizonrec
