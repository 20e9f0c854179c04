// Leave-one-out ranking evaluation over the full target catalog, HR@k /
// NDCG@k aggregation, and export of representation-similarity data for
// downstream plotting.
#pragma once

#include "horizonrec/model.hpp"

namespace horizonrec {

struct RankingResult {
    int user = -1;
    int rank = 0;              // 1-based among all target items
    std::vector<int> top_items;  // best-ranked vocabulary indices
};

// Rank of `held_out` among scores[1..V]: 1 + number of items scoring
// strictly higher, plus equal-scoring items with a lower index.
inline int rank_target(const std::vector<double>& scores, int held_out) {
    const int vocab = static_cast<int>(scores.size()) - 1;
    if (held_out < 1 || held_out > vocab)
        fail(strfmt("rank_target: held-out index %d outside vocabulary [1,%d]", held_out, vocab));
    const double s = scores[held_out];
    int ahead = 0;
    for (int j = 1; j <= vocab; ++j)
        if (scores[j] > s || (scores[j] == s && j < held_out)) ++ahead;
    return 1 + ahead;
}

inline std::vector<int> top_k_items(const std::vector<double>& scores, int k) {
    const int vocab = static_cast<int>(scores.size()) - 1;
    std::vector<int> idx(vocab);
    for (int j = 0; j < vocab; ++j) idx[j] = j + 1;
    k = std::min(k, vocab);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(k);
    return idx;
}

inline double hr_at_k(const std::vector<RankingResult>& results, int k) {
    if (results.empty()) fail("hr_at_k: no ranking results");
    if (k < 1) fail("hr_at_k: k must be >= 1");
    int hits = 0;
    for (const auto& r : results) hits += r.rank <= k ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

// Single-relevant-item NDCG: 1 / log2(rank + 1) within the cutoff.
inline double ndcg_at_k(const std::vector<RankingResult>& results, int k) {
    if (results.empty()) fail("ndcg_at_k: no ranking results");
    if (k < 1) fail("ndcg_at_k: k must be >= 1");
    double total = 0.0;
    for (const auto& r : results)
        if (r.rank <= k) total += 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
    return total / static_cast<double>(results.size());
}

struct MetricRow {
    uint64_t noise_seed = 0;
    std::map<int, double> hr, ndcg;
};

struct MetricReport {
    std::vector<int> ks;
    std::vector<MetricRow> per_seed;
    MetricRow mean;
    int evaluated_users = 0;
    int skipped_users = 0;
};

struct EvalOptions {
    std::vector<int> ks = {5, 10, 20};
    std::vector<uint64_t> noise_seeds;  // empty -> config eval_seed
    bool mask_seen = false;             // mask already-interacted input items
    int top_list = 0;                   // keep per-user top-N item lists
};

// Full inference for one user: encode, retrieve, forward-noise at step T,
// reverse chain, fuse, score.
inline std::vector<double> infer_scores(HorizonRecModel& m, const RetrievalDatabase* db,
                                        const UserView& view, uint64_t noise_seed,
                                        UserStateBundle* bundle = nullptr) {
    Graph g(&m.store);
    Rng noise_rng = Rng::derive(noise_seed, "eval-noise", static_cast<uint64_t>(view.user));
    ExampleNodes nodes = run_example(g, m, db, view, /*one_shot_t=*/0, noise_rng,
                                     /*dropout_rng=*/nullptr, bundle);
    return score_items(g.val(nodes.h_final), m.target_table());
}

inline std::vector<RankingResult> rank_phase(HorizonRecModel& m, const Dataset& ds,
                                             const RetrievalDatabase* db, Phase phase,
                                             uint64_t noise_seed, const EvalOptions& opts,
                                             int* skipped = nullptr) {
    std::vector<UserView> views;
    views.reserve(ds.n_users());
    int skip_count = 0;
    for (int u = 0; u < ds.n_users(); ++u) {
        UserView v = build_view(ds, u, phase, m.cfg.max_len);
        if (v.usable)
            views.push_back(std::move(v));
        else
            ++skip_count;
    }
    std::vector<RankingResult> results(views.size());
    parallel_for(static_cast<int>(views.size()), [&](int i) {
        const UserView& v = views[i];
        auto scores = infer_scores(m, db, v, noise_seed);
        if (opts.mask_seen)
            for (int idx : v.tgt)
                if (idx != v.label) scores[idx] = -std::numeric_limits<double>::infinity();
        RankingResult r;
        r.user = v.user;
        r.rank = rank_target(scores, v.label);
        if (opts.top_list > 0) r.top_items = top_k_items(scores, opts.top_list);
        results[i] = std::move(r);
    });
    if (skipped) *skipped = skip_count;
    return results;
}

inline MetricReport evaluate_model(HorizonRecModel& m, const Dataset& ds,
                                   const RetrievalDatabase* db, Phase phase,
                                   const EvalOptions& opts = {}) {
    check_model_matches_dataset(m, ds);
    MetricReport report;
    report.ks = opts.ks;
    std::vector<uint64_t> seeds = opts.noise_seeds;
    if (seeds.empty()) seeds.push_back(m.cfg.eval_seed);

    for (uint64_t seed : seeds) {
        int skipped = 0;
        const auto results = rank_phase(m, ds, db, phase, seed, opts, &skipped);
        if (results.empty()) fail("evaluate_model: no usable evaluation rows");
        MetricRow row;
        row.noise_seed = seed;
        for (int k : opts.ks) {
            row.hr[k] = hr_at_k(results, k);
            row.ndcg[k] = ndcg_at_k(results, k);
        }
        report.per_seed.push_back(row);
        report.evaluated_users = static_cast<int>(results.size());
        report.skipped_users = skipped;
    }
    for (int k : opts.ks) {
        double hr = 0.0, nd = 0.0;
        for (const auto& row : report.per_seed) {
            hr += row.hr.at(k);
            nd += row.ndcg.at(k);
        }
        report.mean.hr[k] = hr / static_cast<double>(report.per_seed.size());
        report.mean.ndcg[k] = nd / static_cast<double>(report.per_seed.size());
    }
    return report;
}

inline std::string metric_table(const MetricReport& r) {
    std::string out = "metric";
    for (int k : r.ks) out += strfmt("\tHR@%d", k);
    for (int k : r.ks) out += strfmt("\tNDCG@%d", k);
    out += "\n";
    for (const auto& row : r.per_seed) {
        out += strfmt("seed=%llu", static_cast<unsigned long long>(row.noise_seed));
        for (int k : r.ks) out += strfmt("\t%.4f", row.hr.at(k));
        for (int k : r.ks) out += strfmt("\t%.4f", row.ndcg.at(k));
        out += "\n";
    }
    out += "mean";
    for (int k : r.ks) out += strfmt("\t%.4f", r.mean.hr.at(k));
    for (int k : r.ks) out += strfmt("\t%.4f", r.mean.ndcg.at(k));
    out += strfmt("\n(users evaluated: %d, skipped: %d)\n", r.evaluated_users, r.skipped_users);
    return out;
}

inline std::string metric_kv(const MetricReport& r) {
    std::string out;
    for (int k : r.ks) out += strfmt("hr@%d = %.17g\n", k, r.mean.hr.at(k));
    for (int k : r.ks) out += strfmt("ndcg@%d = %.17g\n", k, r.mean.ndcg.at(k));
    for (const auto& row : r.per_seed) {
        const auto seed = static_cast<unsigned long long>(row.noise_seed);
        for (int k : r.ks) out += strfmt("seed.%llu.hr@%d = %.17g\n", seed, k, row.hr.at(k));
        for (int k : r.ks) out += strfmt("seed.%llu.ndcg@%d = %.17g\n", seed, k, row.ndcg.at(k));
    }
    out += strfmt("evaluated_users = %d\n", r.evaluated_users);
    out += strfmt("skipped_users = %d\n", r.skipped_users);
    return out;
}

// ---------------------------------------------------------------------------
// Alignment export: per-user cosine similarities between the final
// representation and each domain representation, plus raw embedding dumps
// for a deterministic sample of users. Plotting happens downstream.

struct AlignmentExport {
    std::string similarities_csv;
    std::string embeddings_csv;
    int n_users = 0;
};

inline AlignmentExport export_alignment(HorizonRecModel& m, const Dataset& ds,
                                        const RetrievalDatabase* db, int n_users,
                                        uint64_t sample_seed = 7) {
    check_model_matches_dataset(m, ds);
    std::vector<int> candidates;
    for (int u = 0; u < ds.n_users(); ++u)
        if (build_view(ds, u, Phase::kTest, m.cfg.max_len).usable) candidates.push_back(u);
    if (candidates.empty()) fail("export_alignment: no usable users");
    Rng rng = Rng::derive(sample_seed, "viz-sample");
    rng.shuffle(candidates);
    if (static_cast<int>(candidates.size()) > n_users) candidates.resize(n_users);
    std::sort(candidates.begin(), candidates.end());

    AlignmentExport out;
    out.n_users = static_cast<int>(candidates.size());
    out.similarities_csv = "user_id,cos_final_source,cos_final_target,cos_final_mixed\n";
    std::string header = "user_id,kind";
    for (int j = 0; j < m.cfg.d; ++j) header += strfmt(",v%d", j);
    out.embeddings_csv = header + "\n";

    std::vector<std::string> sim_rows(candidates.size()), emb_rows(candidates.size());
    parallel_for(static_cast<int>(candidates.size()), [&](int i) {
        const int u = candidates[i];
        UserView view = build_view(ds, u, Phase::kTest, m.cfg.max_len);
        UserStateBundle b;
        infer_scores(m, db, view, m.cfg.eval_seed, &b);
        // A variant without a mixed branch still exports the mixed
        // representation for comparison.
        if (b.h_mixed.empty()) {
            Graph g(&m.store);
            b.h_mixed = g.val(encode_sequence(g, m.enc_mixed, view.mixed).repr);
        }
        const int d = m.cfg.d;
        sim_rows[i] = strfmt("%s,%.17g,%.17g,%.17g\n", ds.users[u].user_id.c_str(),
                             cosine(b.h_final.data(), b.h_source.data(), d),
                             cosine(b.h_final.data(), b.h_target.data(), d),
                             cosine(b.h_final.data(), b.h_mixed.data(), d));
        auto emb_line = [&](const char* kind, const Mat& v) {
            std::string line = ds.users[u].user_id + "," + kind;
            for (int j = 0; j < d; ++j) line += strfmt(",%.17g", v.v[j]);
            return line + "\n";
        };
        std::string lines;
        lines += emb_line("source", b.h_source);
        lines += emb_line("target", b.h_target);
        lines += emb_line("mixed", b.h_mixed);
        lines += emb_line("final", b.h_final);
        Mat target_item(1, d);
        std::memcpy(target_item.data(), m.target_table().row(view.label), sizeof(double) * d);
        lines += emb_line("target_item", target_item);
        emb_rows[i] = std::move(lines);
    });
    for (const auto& s : sim_rows) out.similarities_csv += s;
    for (const auto& s : emb_rows) out.embeddings_csv += s;
    return out;
}

}  // namespace horizonrec
