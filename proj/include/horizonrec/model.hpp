// The assembled recommender: per-domain encoders, base concat fusion,
// retrieval-conditioned dual diffusion and the final representation mix.
// Ablation variants rewire this assembly without touching the modules
// themselves.
#pragma once

#include "horizonrec/checkpoint.hpp"
#include "horizonrec/config.hpp"
#include "horizonrec/data.hpp"
#include "horizonrec/diffusion.hpp"
#include "horizonrec/encoder.hpp"
#include "horizonrec/retrieval.hpp"

namespace horizonrec {

inline bool variant_diffuses_source(Variant v) {
    return v == Variant::kFull || v == Variant::kDpdS || v == Variant::kNoMdr;
}
inline bool variant_diffuses_target(Variant v) {
    return v == Variant::kFull || v == Variant::kDpdT || v == Variant::kNoDpd ||
           v == Variant::kNoMdr;
}
inline bool variant_uses_diffusion(Variant v) {
    return variant_diffuses_source(v) || variant_diffuses_target(v);
}
inline bool variant_uses_mixed_condition(Variant v) {
    return variant_uses_diffusion(v) && v != Variant::kNoDpd;
}
inline bool variant_uses_retrieved_noise(Variant v) {
    return variant_uses_diffusion(v) && v != Variant::kNoMdr;
}
inline bool variant_base_only(Variant v) { return v == Variant::kNoDpdMdr; }

struct HorizonRecModel {
    TrainConfig cfg;
    DiffusionSchedule sched;
    ParamStore store;
    Encoder enc_source, enc_target, enc_mixed;
    FuseMlp fuse;
    Denoiser denoiser;

    int source_vocab() const { return enc_source.vocab_size; }
    int target_vocab() const { return enc_target.vocab_size; }
    int mixed_vocab() const { return enc_mixed.vocab_size; }
    const Mat& target_table() const { return store[enc_target.item_table].value; }
};

inline HorizonRecModel make_model(const TrainConfig& cfg, int source_vocab, int target_vocab,
                                  int mixed_vocab) {
    cfg.validate();
    HorizonRecModel m;
    m.cfg = cfg;
    m.sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    EncoderConfig ec{cfg.d, cfg.max_len, cfg.layers, cfg.dropout};
    m.enc_source = make_encoder(m.store, "enc_s", source_vocab, ec, cfg.seed);
    m.enc_target = make_encoder(m.store, "enc_t", target_vocab, ec, cfg.seed);
    m.enc_mixed = make_encoder(m.store, "enc_m", mixed_vocab, ec, cfg.seed);
    m.fuse = make_fuse_mlp(m.store, "fuse", cfg.d, cfg.seed);
    m.denoiser = make_denoiser(m.store, "dn", cfg.d, cfg.seed);
    if (cfg.freeze_encoders)
        for (auto& p : m.store.all())
            if (p.name.rfind("enc_", 0) == 0) p.trainable = false;
    return m;
}

// ---------------------------------------------------------------------------
// Per-user model inputs. The training example predicts the last item of
// the target train prefix from everything before it; validation and test
// follow the leave-one-out protocol.

enum class Phase { kTrain, kValidation, kTest };

struct UserView {
    int user = -1;
    std::vector<int> src, tgt, mixed;
    int label = 0;
    bool usable = false;
};

inline UserView build_view(const Dataset& ds, int user, Phase phase, int max_len) {
    UserView v;
    v.user = user;
    const int drop = phase == Phase::kTrain ? 3 : phase == Phase::kValidation ? 2 : 1;
    v.src = ds.users[user].src;
    v.tgt = ds.target_input(user, drop);
    v.mixed = ds.mixed_input(user, drop);
    switch (phase) {
        case Phase::kTrain: v.label = ds.train_label(user); break;
        case Phase::kValidation: v.label = ds.held_out_label(user, Split::kValidation); break;
        case Phase::kTest: v.label = ds.held_out_label(user, Split::kTest); break;
    }
    auto clip = [max_len](std::vector<int>& xs) {
        if (static_cast<int>(xs.size()) > max_len)
            xs.erase(xs.begin(), xs.end() - max_len);
    };
    clip(v.src);
    clip(v.tgt);
    clip(v.mixed);
    v.usable = v.label > 0 && !v.src.empty() && !v.tgt.empty() && !v.mixed.empty();
    return v;
}

// All representations produced by one pass for one user.
struct UserStateBundle {
    Mat h_source, h_target, h_mixed;     // sequence-level representations
    Mat h_base;                          // concat-MLP base fusion
    Mat noised_source, noised_target;    // forward-noised states
    Mat recon_source, recon_target;      // reconstructed representations
    Mat h_intermediate;                  // recon_source + recon_target
    Mat h_final;                         // fused output used for ranking
};

struct ExampleNodes {
    int h_source = -1, h_target = -1, h_mixed = -1;
    int h_base = -1;
    int recon_source = -1, recon_target = -1;
    int h_final = -1;
    int diff_source = -1, diff_target = -1;  // squared-error scalar nodes
};

// Builds the tape for one example. `one_shot_t` > 0 selects the training
// path (single denoiser application from step t); 0 runs the full reverse
// chain from step T. `noise_rng` drives retrieved/Gaussian noise draws;
// `dropout_rng` may be null to disable dropout.
inline ExampleNodes run_example(Graph& g, HorizonRecModel& m, const RetrievalDatabase* db,
                                const UserView& view, int one_shot_t, Rng& noise_rng,
                                Rng* dropout_rng = nullptr, UserStateBundle* bundle = nullptr) {
    const Variant variant = m.cfg.variant;
    const bool training = dropout_rng != nullptr;
    ExampleNodes out;

    out.h_source = encode_sequence(g, m.enc_source, view.src, training, dropout_rng).repr;
    out.h_target = encode_sequence(g, m.enc_target, view.tgt, training, dropout_rng).repr;
    if (variant_uses_mixed_condition(variant))
        out.h_mixed = encode_sequence(g, m.enc_mixed, view.mixed, training, dropout_rng).repr;
    out.h_base = fuse_base(g, m.fuse, out.h_source, out.h_target);

    if (bundle) {
        bundle->h_source = g.val(out.h_source);
        bundle->h_target = g.val(out.h_target);
        if (out.h_mixed >= 0) bundle->h_mixed = g.val(out.h_mixed);
        bundle->h_base = g.val(out.h_base);
    }

    if (variant_base_only(variant)) {
        out.h_final = out.h_base;
        if (bundle) bundle->h_final = g.val(out.h_final);
        return out;
    }

    const int cond = variant_uses_mixed_condition(variant) ? out.h_mixed : -1;
    auto diffuse = [&](int h_node, int domain_idx, int& recon, int& diff, Mat* noised_slot) {
        Mat z(1, m.cfg.d);
        if (variant_uses_retrieved_noise(variant)) {
            if (!db) fail("run_example: retrieval database required for this variant");
            const Mat& query = g.val(h_node);
            const auto ids = retrieve_topk(query, *db, m.cfg.K);
            z = sample_retrieved_noise(query, *db, ids, noise_rng).z;
        } else {
            for (double& x : z.v) x = noise_rng.normal();
        }
        const int t = one_shot_t > 0 ? one_shot_t : m.sched.T;
        const int noised = forward_noise(g, h_node, z, t, m.sched);
        if (noised_slot) *noised_slot = g.val(noised);
        recon = one_shot_t > 0
                    ? denoise_step(g, m.denoiser, noised, cond, t, domain_idx, m.sched)
                    : reverse_chain(g, m.denoiser, noised, cond, domain_idx, m.sched);
        diff = g.sqdiff_sum(h_node, recon);
    };

    if (variant_diffuses_source(variant))
        diffuse(out.h_source, 0, out.recon_source, out.diff_source,
                bundle ? &bundle->noised_source : nullptr);
    else
        out.recon_source = out.h_source;
    if (variant_diffuses_target(variant))
        diffuse(out.h_target, 1, out.recon_target, out.diff_target,
                bundle ? &bundle->noised_target : nullptr);
    else
        out.recon_target = out.h_target;

    const int h_intermediate = g.add(out.recon_source, out.recon_target);
    out.h_final = g.axpby(h_intermediate, out.h_base, 1.0 - m.cfg.w, m.cfg.w);

    if (bundle) {
        bundle->recon_source = g.val(out.recon_source);
        bundle->recon_target = g.val(out.recon_target);
        bundle->h_intermediate = g.val(h_intermediate);
        bundle->h_final = g.val(out.h_final);
    }
    return out;
}

// Final-representation fusion on plain vectors (kept for direct use and
// verification): (1 - w) * (recon_s + recon_t) + w * h_base.
inline Mat fuse_final(const Mat& recon_source, const Mat& recon_target, const Mat& h_base,
                      double w) {
    if (w < 0.0 || w > 1.0) fail("fuse_final: w must lie in [0,1]");
    if (!recon_source.same_shape(recon_target) || !recon_source.same_shape(h_base))
        fail("fuse_final: width mismatch");
    Mat out(h_base.rows, h_base.cols);
    for (size_t i = 0; i < out.size(); ++i)
        out.v[i] = (1.0 - w) * (recon_source.v[i] + recon_target.v[i]) + w * h_base.v[i];
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint plumbing.

inline Checkpoint model_checkpoint(const HorizonRecModel& m, const std::string& dataset_hash_hex) {
    std::map<std::string, std::string> meta;
    meta["kind"] = "model";
    meta["dataset_hash"] = dataset_hash_hex;
    meta["vocab_source"] = strfmt("%d", m.source_vocab());
    meta["vocab_target"] = strfmt("%d", m.target_vocab());
    meta["vocab_mixed"] = strfmt("%d", m.mixed_vocab());
    for (const auto& raw : split(config_to_text(m.cfg), '\n')) {
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        meta["cfg." + trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return checkpoint_from_store(m.store, std::move(meta));
}

inline TrainConfig config_from_checkpoint(const Checkpoint& ck) {
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : ck.meta)
        if (k.rfind("cfg.", 0) == 0) kv[k.substr(4)] = v;
    TrainConfig cfg;
    apply_config_kv(cfg, kv);
    cfg.validate();
    return cfg;
}

inline HorizonRecModel model_from_checkpoint(const Checkpoint& ck) {
    if (ck.meta_or("kind", "") != "model") fail("checkpoint is not a model checkpoint");
    const TrainConfig cfg = config_from_checkpoint(ck);
    HorizonRecModel m = make_model(cfg, std::stoi(ck.meta_or("vocab_source", "0")),
                                   std::stoi(ck.meta_or("vocab_target", "0")),
                                   std::stoi(ck.meta_or("vocab_mixed", "0")));
    load_into_store(ck, m.store);
    return m;
}

inline void check_model_matches_dataset(const HorizonRecModel& m, const Dataset& ds) {
    if (m.source_vocab() != ds.vocab_source.size() || m.target_vocab() != ds.vocab_target.size() ||
        m.mixed_vocab() != ds.vocab_mixed.size())
        fail(strfmt("checkpoint/dataset mismatch: vocabularies %d/%d/%d vs %d/%d/%d",
                    m.source_vocab(), m.target_vocab(), m.mixed_vocab(), ds.vocab_source.size(),
                    ds.vocab_target.size(), ds.vocab_mixed.size()));
}

}  // namespace horizonrec
