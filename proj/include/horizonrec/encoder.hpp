// Self-attentive sequence encoder (single-head, causal), the concat-MLP
// base fusion, item scoring and next-item pretraining. One encoder
// instance per domain (source / target / mixed), each with its own item
// embedding table; the sequence-level representation is the hidden state
// at the last position.
#pragma once

#include <limits>

#include "horizonrec/autograd.hpp"

namespace horizonrec {

struct EncoderConfig {
    int d = 64;
    int max_len = 200;
    int layers = 1;
    double dropout = 0.2;
};

struct EncoderLayerHandles {
    int ln1_gain, ln1_bias;
    int wq, wk, wv;
    int ln2_gain, ln2_bias;
    int w1, b1, w2, b2;
};

struct Encoder {
    EncoderConfig cfg;
    int vocab_size = 0;
    int item_table = -1;  // (vocab_size + 1) x d, row 0 = padding
    int pos_table = -1;   // max_len x d
    std::vector<EncoderLayerHandles> layers;
    std::string prefix;
};

inline Encoder make_encoder(ParamStore& store, const std::string& prefix, int vocab_size,
                            const EncoderConfig& cfg, uint64_t seed) {
    if (vocab_size < 1) fail("make_encoder: empty vocabulary");
    Encoder enc;
    enc.cfg = cfg;
    enc.vocab_size = vocab_size;
    enc.prefix = prefix;

    Mat items = detail::init_normal(seed, prefix + ".item_table", vocab_size + 1, cfg.d, 0.02);
    for (int j = 0; j < cfg.d; ++j) items.at(0, j) = 0.0;  // padding row
    enc.item_table = store.add(prefix + ".item_table", std::move(items));
    enc.pos_table = store.add(prefix + ".pos_table",
                              detail::init_normal(seed, prefix + ".pos_table", cfg.max_len, cfg.d, 0.02));

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + strfmt(".l%d", l);
        EncoderLayerHandles h;
        h.ln1_gain = store.add(lp + ".ln1_gain", detail::init_const(1, cfg.d, 1.0));
        h.ln1_bias = store.add(lp + ".ln1_bias", Mat(1, cfg.d));
        h.wq = store.add(lp + ".wq", detail::init_xavier(seed, lp + ".wq", cfg.d, cfg.d));
        h.wk = store.add(lp + ".wk", detail::init_xavier(seed, lp + ".wk", cfg.d, cfg.d));
        h.wv = store.add(lp + ".wv", detail::init_xavier(seed, lp + ".wv", cfg.d, cfg.d));
        h.ln2_gain = store.add(lp + ".ln2_gain", detail::init_const(1, cfg.d, 1.0));
        h.ln2_bias = store.add(lp + ".ln2_bias", Mat(1, cfg.d));
        h.w1 = store.add(lp + ".w1", detail::init_xavier(seed, lp + ".w1", cfg.d, cfg.d));
        h.b1 = store.add(lp + ".b1", Mat(1, cfg.d));
        h.w2 = store.add(lp + ".w2", detail::init_xavier(seed, lp + ".w2", cfg.d, cfg.d));
        h.b2 = store.add(lp + ".b2", Mat(1, cfg.d));
        enc.layers.push_back(h);
    }
    return enc;
}

// Optional per-layer internals for inspection in tests.
struct EncodeDiag {
    std::vector<Mat> attention;  // row-stochastic over unmasked positions
    std::vector<Mat> context;    // attention-weighted value rows
};

struct EncodeOut {
    int hidden = -1;  // L x d node
    int repr = -1;    // 1 x d node, last position
};

inline EncodeOut encode_sequence(Graph& g, const Encoder& enc, const std::vector<int>& items,
                                 bool training = false, Rng* dropout_rng = nullptr,
                                 EncodeDiag* diag = nullptr) {
    const int len = static_cast<int>(items.size());
    if (len == 0) fail("encode_sequence: empty sequence");
    if (len > enc.cfg.max_len)
        fail(strfmt("encode_sequence: length %d exceeds max_len %d", len, enc.cfg.max_len));
    for (int idx : items)
        if (idx < 1 || idx > enc.vocab_size)
            fail(strfmt("encode_sequence: item index %d outside vocabulary [1,%d]", idx, enc.vocab_size));

    const bool use_dropout = training && enc.cfg.dropout > 0.0 && dropout_rng;
    const double rate = enc.cfg.dropout;

    std::vector<int> pos_idx(len);
    for (int i = 0; i < len; ++i) pos_idx[i] = i;

    int x = g.add(g.gather(g.param(enc.item_table), items),
                  g.gather(g.param(enc.pos_table), pos_idx));
    if (use_dropout) x = g.dropout(x, rate, *dropout_rng);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(enc.cfg.d));
    for (const auto& layer : enc.layers) {
        const int xn = g.layernorm_rows(x, g.param(layer.ln1_gain), g.param(layer.ln1_bias));
        const int q = g.matmul(xn, g.param(layer.wq));
        const int k = g.matmul(xn, g.param(layer.wk));
        const int v = g.matmul(xn, g.param(layer.wv));
        const int attn = g.softmax_rows(g.scale(g.matmul_nt(q, k), inv_sqrt_d), /*causal=*/true);
        int attn_used = attn;
        if (use_dropout) attn_used = g.dropout(attn, rate, *dropout_rng);
        const int ctx = g.matmul(attn_used, v);
        if (diag) {
            diag->attention.push_back(g.val(attn));
            diag->context.push_back(g.val(ctx));
        }
        x = g.add(x, ctx);

        const int xn2 = g.layernorm_rows(x, g.param(layer.ln2_gain), g.param(layer.ln2_bias));
        const int f1 = g.relu(g.add_rowvec(g.matmul(xn2, g.param(layer.w1)), g.param(layer.b1)));
        int f2 = g.add_rowvec(g.matmul(f1, g.param(layer.w2)), g.param(layer.b2));
        if (use_dropout) f2 = g.dropout(f2, rate, *dropout_rng);
        x = g.add(x, f2);
    }
    return {x, g.row_of(x, len - 1)};
}

// ---------------------------------------------------------------------------
// Base cross-domain fusion: one 2d -> d affine layer with ReLU.

struct FuseMlp {
    int w = -1;  // 2d x d
    int b = -1;  // 1 x d
    bool relu_enabled = true;
};

inline FuseMlp make_fuse_mlp(ParamStore& store, const std::string& prefix, int d, uint64_t seed) {
    FuseMlp f;
    f.w = store.add(prefix + ".w", detail::init_xavier(seed, prefix + ".w", 2 * d, d));
    f.b = store.add(prefix + ".b", Mat(1, d));
    return f;
}

inline int fuse_base(Graph& g, const FuseMlp& fuse, int h_source, int h_target) {
    const Mat& hs = g.val(h_source);
    const Mat& ht = g.val(h_target);
    if (hs.cols != ht.cols || hs.rows != 1 || ht.rows != 1)
        fail("fuse_base: representation width mismatch");
    const int z = g.add_rowvec(g.matmul(g.concat_cols(h_source, h_target), g.param(fuse.w)),
                               g.param(fuse.b));
    return fuse.relu_enabled ? g.relu(z) : z;
}

// ---------------------------------------------------------------------------
// Scoring (outside the tape; used by ranking and by tests).

// scores[j] = h . e_j for vocabulary indices j in [1, V]; scores[0] is a
// -inf sentinel for the padding row.
inline std::vector<double> score_items(const Mat& h, const Mat& table) {
    if (h.rows != 1 || h.cols != table.cols) fail("score_items: width mismatch");
    std::vector<double> scores(table.rows);
    scores[0] = -std::numeric_limits<double>::infinity();
    for (int j = 1; j < table.rows; ++j) scores[j] = dot(h.data(), table.row(j), h.cols);
    return scores;
}

// ---------------------------------------------------------------------------
// Next-item pretraining (cross-entropy at every causal position, tied
// output weights).

struct PretrainReport {
    std::vector<double> epoch_loss;
    double final_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

inline PretrainReport pretrain_encoder(ParamStore& store, const Encoder& enc,
                                       const std::vector<std::vector<int>>& sequences, int epochs,
                                       double lr, int batch_size, uint64_t seed) {
    std::vector<int> usable;
    for (size_t i = 0; i < sequences.size(); ++i)
        if (sequences[i].size() >= 2) usable.push_back(static_cast<int>(i));
    if (usable.empty()) fail("pretrain_encoder: no sequence of length >= 2");

    Adam opt;
    opt.lr = lr;
    PretrainReport report;
    Rng order_rng = Rng::derive(seed, "pretrain-order:" + enc.prefix);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<int> order = usable;
        order_rng.shuffle(order);
        double epoch_ce = 0.0;
        int64_t epoch_positions = 0;
        for (size_t start = 0; start < order.size(); start += batch_size) {
            const size_t end = std::min(order.size(), start + batch_size);
            Graph g(&store);
            std::vector<int> ce_terms;
            for (size_t b = start; b < end; ++b) {
                const auto& seq = sequences[order[b]];
                Rng drop_rng = Rng::derive(seed, "pretrain-dropout:" + enc.prefix,
                                           static_cast<uint64_t>(epoch), static_cast<uint64_t>(order[b]));
                EncodeOut eo = encode_sequence(g, enc, seq, /*training=*/true, &drop_rng);
                for (size_t t = 0; t + 1 < seq.size(); ++t)
                    ce_terms.push_back(g.cross_entropy_table(
                        g.row_of(eo.hidden, static_cast<int>(t)), g.param(enc.item_table),
                        seq[t + 1]));
            }
            const int loss = g.weighted_sum(ce_terms, 1.0 / static_cast<double>(ce_terms.size()));
            const double loss_val = g.scalar(loss);
            if (!std::isfinite(loss_val))
                fail(strfmt("pretrain_encoder: non-finite loss at epoch %d (%s); lower the learning rate",
                            epoch, enc.prefix.c_str()));
            epoch_ce += loss_val * static_cast<double>(ce_terms.size());
            epoch_positions += static_cast<int64_t>(ce_terms.size());
            store.zero_grad();
            g.backward(loss);
            opt.step(store);
        }
        report.epoch_loss.push_back(epoch_ce / static_cast<double>(epoch_positions));
    }
    return report;
}

// Fraction of causal positions whose top-scored next item matches the
// actual next item (evaluation mode).
inline double next_item_accuracy(ParamStore& store, const Encoder& enc,
                                 const std::vector<std::vector<int>>& sequences) {
    int64_t hits = 0, total = 0;
    for (const auto& seq : sequences) {
        if (seq.size() < 2) continue;
        Graph g(&store);
        EncodeOut eo = encode_sequence(g, enc, seq);
        const Mat& hidden = g.val(eo.hidden);
        const Mat& table = store[enc.item_table].value;
        for (size_t t = 0; t + 1 < seq.size(); ++t) {
            Mat h(1, hidden.cols);
            std::memcpy(h.data(), hidden.row(static_cast<int>(t)), sizeof(double) * hidden.cols);
            const auto scores = score_items(h, table);
            int best = 1;
            for (int j = 2; j < static_cast<int>(scores.size()); ++j)
                if (scores[j] > scores[best]) best = j;
            hits += best == seq[t + 1] ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace horizonrec
