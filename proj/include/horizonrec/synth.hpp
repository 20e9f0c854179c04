// Synthetic cross-domain interaction generator. One latent interest
// vector per user drives item choice in BOTH domains, so cross-domain
// signal is planted by construction; temperature = infinity degrades to
// uniform sampling with no structure.
#pragma once

#include <limits>

#include "horizonrec/data.hpp"

namespace horizonrec {

struct SynthConfig {
    int n_users = 200;
    int n_items_per_domain = 300;
    int seq_len_min = 10;
    int seq_len_max = 20;
    int latent_dim = 16;
    double temperature = 0.5;  // +inf -> uniform item sampling
    uint64_t seed = 1;
    int min_source = 3;  // forced per-domain floor so every user passes filtering
    int min_target = 4;  // >= 4 leaves a usable training example after the split

    void validate() const {
        if (n_users < 1 || n_items_per_domain < 1 || latent_dim < 1)
            fail("synth: counts must be positive");
        if (seq_len_min < min_source + min_target || seq_len_max < seq_len_min)
            fail(strfmt("synth: degenerate sequence length range [%d,%d]", seq_len_min, seq_len_max));
        if (!(temperature > 0.0)) fail("synth: temperature must be positive");
    }
};

struct SynthResult {
    std::vector<InteractionRecord> source_records;
    std::vector<InteractionRecord> target_records;
    Dataset dataset;
};

namespace detail {

// Sample an item index in [0, n) with p(j) proportional to
// exp(user . item_j / temperature); uniform when temperature is infinite.
inline int sample_item(const std::vector<double>& logits, double mx, Rng& rng) {
    double total = 0.0;
    for (double z : logits) total += std::exp(z - mx);
    double r = rng.uniform() * total;
    for (size_t j = 0; j < logits.size(); ++j) {
        r -= std::exp(logits[j] - mx);
        if (r <= 0.0) return static_cast<int>(j);
    }
    return static_cast<int>(logits.size()) - 1;
}

}  // namespace detail

inline SynthResult generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    SynthResult out;
    const bool uniform = std::isinf(cfg.temperature);

    Rng latent_rng = Rng::derive(cfg.seed, "synth-latents");
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    auto draw_latents = [&](int count) {
        Mat m(count, cfg.latent_dim);
        latent_rng.fill_normal(m, 0.0, 1.0);
        return m;
    };
    const Mat user_latents = draw_latents(cfg.n_users);
    const Mat item_latents_src = draw_latents(cfg.n_items_per_domain);
    const Mat item_latents_tgt = draw_latents(cfg.n_items_per_domain);

    for (int u = 0; u < cfg.n_users; ++u) {
        Rng rng = Rng::derive(cfg.seed, "synth-user", static_cast<uint64_t>(u));
        const std::string user_id = strfmt("u%04d", u);

        // Per-user item logits for each domain.
        std::vector<double> logits_src(cfg.n_items_per_domain), logits_tgt(cfg.n_items_per_domain);
        double mx_src = -1e300, mx_tgt = -1e300;
        for (int j = 0; j < cfg.n_items_per_domain; ++j) {
            if (uniform) {
                logits_src[j] = logits_tgt[j] = 0.0;
            } else {
                logits_src[j] = dot(user_latents.row(u), item_latents_src.row(j), cfg.latent_dim) *
                                scale / cfg.temperature;
                logits_tgt[j] = dot(user_latents.row(u), item_latents_tgt.row(j), cfg.latent_dim) *
                                scale / cfg.temperature;
            }
            mx_src = std::max(mx_src, logits_src[j]);
            mx_tgt = std::max(mx_tgt, logits_tgt[j]);
        }

        const int total_len =
            cfg.seq_len_min + static_cast<int>(rng.uniform_int(
                                  static_cast<uint64_t>(cfg.seq_len_max - cfg.seq_len_min + 1)));
        const double source_rate = rng.uniform(0.35, 0.65);

        // Domain plan: Bernoulli interleaving with per-domain floors.
        std::vector<Domain> plan;
        int n_src = 0, n_tgt = 0;
        for (int i = 0; i < total_len; ++i) {
            const Domain d = rng.uniform() < source_rate ? Domain::kSource : Domain::kTarget;
            plan.push_back(d);
            (d == Domain::kSource ? n_src : n_tgt)++;
        }
        while (n_src < cfg.min_source) {
            plan.push_back(Domain::kSource);
            ++n_src;
        }
        while (n_tgt < cfg.min_target) {
            plan.push_back(Domain::kTarget);
            ++n_tgt;
        }

        int64_t ts = 0;
        for (Domain d : plan) {
            ts += 1 + static_cast<int64_t>(rng.uniform_int(3));  // strictly increasing
            const int j = d == Domain::kSource
                              ? detail::sample_item(logits_src, mx_src, rng)
                              : detail::sample_item(logits_tgt, mx_tgt, rng);
            InteractionRecord rec{user_id, strfmt("i%04d", j), ts, d};
            (d == Domain::kSource ? out.source_records : out.target_records).push_back(rec);
        }
    }

    PreprocessOptions opts;
    opts.min_interactions = 3;
    opts.max_len = 200;
    out.dataset = preprocess(out.source_records, out.target_records, opts);
    out.dataset.meta["generator"] = "synthetic";
    out.dataset.meta["synth_seed"] = strfmt("%llu", static_cast<unsigned long long>(cfg.seed));
    out.dataset.meta["synth_temperature"] = strfmt("%.17g", cfg.temperature);
    out.dataset.meta["synth_latent_dim"] = strfmt("%d", cfg.latent_dim);
    return out;
}

inline std::string records_to_tsv(const std::vector<InteractionRecord>& records) {
    std::string out;
    for (const auto& r : records)
        out += strfmt("%s\t%s\t%lld\n", r.user_id.c_str(), r.item_id.c_str(),
                      static_cast<long long>(r.timestamp));
    return out;
}

}  // namespace horizonrec
