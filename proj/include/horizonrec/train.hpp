// Training loop: per epoch, every usable user contributes one example
// (predict the last item of the target train prefix). Retrieval noise is
// resampled fresh per example per epoch; the diffusion step t is drawn
// uniformly and a single denoiser application estimates the clean
// representation for both the diffusion and recommendation losses.
// Checkpoints track the best validation NDCG@10.
#pragma once

#include <chrono>

#include "horizonrec/evaluate.hpp"

namespace horizonrec {

struct EpochLoss {
    double l_rec = 0.0;
    double l_diff = 0.0;
    double l_total = 0.0;
    double val_ndcg10 = 0.0;
    double wall_ms = 0.0;
};

struct LossReport {
    std::vector<EpochLoss> epochs;
};

struct TrainResult {
    LossReport report;
    int best_epoch = -1;
    double best_val_ndcg10 = 0.0;
    Checkpoint best_checkpoint;
    int usable_examples = 0;
};

struct TrainHooks {
    bool validate_each_epoch = true;
    bool verbose = false;
};

inline TrainResult train_model(HorizonRecModel& m, const Dataset& ds, const RetrievalDatabase* db,
                               const std::string& dataset_hash_hex, const TrainHooks& hooks = {}) {
    check_model_matches_dataset(m, ds);
    if (variant_uses_retrieved_noise(m.cfg.variant) && (!db || db->rows() == 0))
        fail("train_model: retrieval database required before training");

    std::vector<UserView> train_views;
    for (int u = 0; u < ds.n_users(); ++u) {
        UserView v = build_view(ds, u, Phase::kTrain, m.cfg.max_len);
        if (v.usable) train_views.push_back(std::move(v));
    }
    if (train_views.empty()) fail("train_model: no usable training examples");
    const int skipped = ds.n_users() - static_cast<int>(train_views.size());
    if (skipped > 0)
        log_warn(strfmt("%d user(s) have no usable training example (target history too short)",
                        skipped));

    Adam opt;
    opt.lr = m.cfg.learning_rate;
    TrainResult result;
    result.usable_examples = static_cast<int>(train_views.size());
    Rng order_rng = Rng::derive(m.cfg.seed, "train-order");
    EvalOptions val_opts;
    val_opts.ks = {10};

    const bool diff_src = variant_diffuses_source(m.cfg.variant);
    const bool diff_tgt = variant_diffuses_target(m.cfg.variant);
    int epochs_since_best = 0;

    for (int epoch = 0; epoch < m.cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<int> order(train_views.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        order_rng.shuffle(order);

        double rec_sum = 0.0, diff_sum = 0.0, total_sum = 0.0;
        int64_t example_count = 0;

        for (size_t start = 0; start < order.size(); start += m.cfg.batch_size) {
            const size_t end = std::min(order.size(), start + m.cfg.batch_size);
            Graph g(&m.store);
            std::vector<int> ce_terms, diff_s_terms, diff_t_terms;
            for (size_t b = start; b < end; ++b) {
                const UserView& view = train_views[order[b]];
                const auto uid = static_cast<uint64_t>(view.user);
                Rng noise_rng = Rng::derive(m.cfg.seed, "train-noise",
                                            static_cast<uint64_t>(epoch), uid);
                Rng dropout_rng = Rng::derive(m.cfg.seed, "train-dropout",
                                              static_cast<uint64_t>(epoch), uid);
                const int t = 1 + static_cast<int>(noise_rng.uniform_int(
                                      static_cast<uint64_t>(m.cfg.T)));
                ExampleNodes nodes = run_example(g, m, db, view, t, noise_rng, &dropout_rng);
                ce_terms.push_back(g.cross_entropy_table(
                    nodes.h_final, g.param(m.enc_target.item_table), view.label));
                if (nodes.diff_source >= 0) diff_s_terms.push_back(nodes.diff_source);
                if (nodes.diff_target >= 0) diff_t_terms.push_back(nodes.diff_target);
            }
            if (ce_terms.empty()) {
                log_warn(strfmt("epoch %d: empty batch skipped", epoch));
                continue;
            }
            const int batch_n = static_cast<int>(ce_terms.size());
            const int l_rec = g.weighted_sum(ce_terms, 1.0 / batch_n);

            int l_diff = -1;
            if (diff_src || diff_tgt) {
                std::vector<int> domain_means;
                if (!diff_s_terms.empty())
                    domain_means.push_back(g.weighted_sum(diff_s_terms, 1.0 / batch_n));
                if (!diff_t_terms.empty())
                    domain_means.push_back(g.weighted_sum(diff_t_terms, 1.0 / batch_n));
                if (!domain_means.empty())
                    l_diff = g.weighted_sum(domain_means, 1.0 / domain_means.size());
            }
            const int l_total = l_diff >= 0 ? g.axpby(l_rec, l_diff, 1.0, m.cfg.lambda) : l_rec;

            const double total_val = g.scalar(l_total);
            if (!std::isfinite(total_val))
                fail(strfmt("train_model: non-finite loss at epoch %d; aborting", epoch));
            rec_sum += g.scalar(l_rec) * batch_n;
            diff_sum += (l_diff >= 0 ? g.scalar(l_diff) : 0.0) * batch_n;
            total_sum += total_val * batch_n;
            example_count += batch_n;

            m.store.zero_grad();
            g.backward(l_total);
            opt.step(m.store);
        }

        EpochLoss ep;
        ep.l_rec = rec_sum / static_cast<double>(example_count);
        ep.l_diff = diff_sum / static_cast<double>(example_count);
        ep.l_total = total_sum / static_cast<double>(example_count);

        if (hooks.validate_each_epoch) {
            MetricReport val = evaluate_model(m, ds, db, Phase::kValidation, val_opts);
            ep.val_ndcg10 = val.mean.ndcg.at(10);
            if (result.best_epoch < 0 || ep.val_ndcg10 > result.best_val_ndcg10) {
                result.best_epoch = epoch;
                result.best_val_ndcg10 = ep.val_ndcg10;
                result.best_checkpoint = model_checkpoint(m, dataset_hash_hex);
                epochs_since_best = 0;
            } else if (++epochs_since_best >= m.cfg.patience && m.cfg.patience > 0) {
                ep.wall_ms = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
                result.report.epochs.push_back(ep);
                if (hooks.verbose)
                    log_info(strfmt("early stop at epoch %d (best val NDCG@10 %.4f @ epoch %d)",
                                    epoch, result.best_val_ndcg10, result.best_epoch));
                break;
            }
        }
        ep.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        result.report.epochs.push_back(ep);
        if (hooks.verbose && (epoch % 10 == 0 || epoch + 1 == m.cfg.epochs))
            log_info(strfmt("epoch %d: rec %.4f diff %.4f total %.4f val-ndcg@10 %.4f", epoch,
                            ep.l_rec, ep.l_diff, ep.l_total, ep.val_ndcg10));
    }

    if (result.best_epoch < 0) {
        // No validation pass requested: final parameters are the checkpoint.
        result.best_checkpoint = model_checkpoint(m, dataset_hash_hex);
        result.best_epoch = m.cfg.epochs - 1;
    }
    return result;
}

inline std::string loss_report_csv(const LossReport& r) {
    std::string out = "epoch,l_rec,l_diff,l_total,val_ndcg10,wall_ms\n";
    for (size_t i = 0; i < r.epochs.size(); ++i) {
        const auto& e = r.epochs[i];
        out += strfmt("%zu,%.17g,%.17g,%.17g,%.17g,%.3f\n", i, e.l_rec, e.l_diff, e.l_total,
                      e.val_ndcg10, e.wall_ms);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Next-item pretraining entry points for the three domain encoders.

inline std::vector<std::vector<int>> pretrain_sequences(const Dataset& ds, Domain domain,
                                                        bool mixed, int max_len) {
    std::vector<std::vector<int>> seqs;
    for (int u = 0; u < ds.n_users(); ++u) {
        std::vector<int> s;
        if (mixed) {
            s = ds.mixed_input(u, 2);  // train-portion merge, no held-out items
        } else if (domain == Domain::kSource) {
            s = ds.users[u].src;
        } else {
            s = ds.target_input(u, 2);
        }
        if (static_cast<int>(s.size()) > max_len) s.erase(s.begin(), s.end() - max_len);
        if (!s.empty()) seqs.push_back(std::move(s));
    }
    return seqs;
}

struct PretrainOutcome {
    Checkpoint checkpoint;
    PretrainReport report;
};

// Trains one domain encoder with the standard next-item objective and
// packages it as a checkpoint whose tensor names match the main model.
inline PretrainOutcome pretrain_domain(const Dataset& ds, const std::string& which,
                                       const TrainConfig& cfg, int epochs, double lr) {
    ParamStore store;
    EncoderConfig ec{cfg.d, cfg.max_len, cfg.layers, cfg.dropout};
    Encoder enc;
    std::vector<std::vector<int>> seqs;
    if (which == "source") {
        enc = make_encoder(store, "enc_s", ds.vocab_source.size(), ec, cfg.seed);
        seqs = pretrain_sequences(ds, Domain::kSource, false, cfg.max_len);
    } else if (which == "target") {
        enc = make_encoder(store, "enc_t", ds.vocab_target.size(), ec, cfg.seed);
        seqs = pretrain_sequences(ds, Domain::kTarget, false, cfg.max_len);
    } else if (which == "mixed") {
        enc = make_encoder(store, "enc_m", ds.vocab_mixed.size(), ec, cfg.seed);
        seqs = pretrain_sequences(ds, Domain::kSource, true, cfg.max_len);
    } else {
        fail("pretrain_domain: domain must be source, target or mixed");
    }
    PretrainOutcome out;
    out.report = pretrain_encoder(store, enc, seqs, epochs, lr, cfg.batch_size, cfg.seed);
    std::map<std::string, std::string> meta;
    meta["kind"] = "pretrain";
    meta["domain"] = which;
    meta["d"] = strfmt("%d", cfg.d);
    meta["layers"] = strfmt("%d", cfg.layers);
    meta["max_len"] = strfmt("%d", cfg.max_len);
    meta["vocab"] = strfmt("%d", enc.vocab_size);
    meta["epochs"] = strfmt("%d", epochs);
    meta["final_loss"] = strfmt("%.17g", out.report.final_loss());
    out.checkpoint = checkpoint_from_store(store, std::move(meta));
    return out;
}

// Seeds a freshly built model with pretrained encoder tensors (matched by
// name; fuse/denoiser parameters keep their random initialization).
inline void seed_from_pretrained(HorizonRecModel& m, const std::vector<Checkpoint>& pretrained) {
    for (const auto& ck : pretrained) {
        if (ck.meta_or("kind", "") != "pretrain") fail("seed_from_pretrained: not a pretrain checkpoint");
        ck.require_meta("d", strfmt("%d", m.cfg.d), "embedding width differs");
        ck.require_meta("layers", strfmt("%d", m.cfg.layers), "layer count differs");
        ck.require_meta("max_len", strfmt("%d", m.cfg.max_len), "max length differs");
        const int filled = load_into_store(ck, m.store, /*require_all=*/false);
        if (filled == 0) fail("seed_from_pretrained: checkpoint matched no model tensors");
    }
}

}  // namespace horizonrec
