// Retrieval database of position-filtered mixed-domain segments and the
// retrieved-noise construction that replaces standard Gaussian draws.
//
// Candidates are the prefixes of a user's mixed sequence that end in a
// target-domain item (end position l > 1), windowed to the most recent
// `window` items. Each candidate is embedded as a low-pass-filtered sum
// of pretrained mixed-domain item embeddings; retrieval is exhaustive
// cosine search over all candidates of all users.
#pragma once

#include <filesystem>

#include "horizonrec/data.hpp"

namespace horizonrec {

struct CandidateSegment {
    int end_index = 0;    // 1-based position l of the final (target) item
    int window_start = 0; // 1-based position k = max(1, l - window + 1)
    std::vector<int> item_indices;  // mixed-vocabulary indices for positions k..l
};

// One (index, is_target) pair per mixed-sequence position.
using MixedIndexView = std::vector<std::pair<int, bool>>;

inline std::vector<CandidateSegment> extract_candidates(const MixedIndexView& mixed, int window) {
    if (window < 1) fail("extract_candidates: window must be >= 1");
    std::vector<CandidateSegment> out;
    const int len = static_cast<int>(mixed.size());
    for (int l = 2; l <= len; ++l) {
        if (!mixed[l - 1].second) continue;  // must end with a target-domain item
        CandidateSegment seg;
        seg.end_index = l;
        seg.window_start = std::max(1, l - window + 1);
        for (int j = seg.window_start; j <= l; ++j) seg.item_indices.push_back(mixed[j - 1].first);
        out.push_back(std::move(seg));
    }
    return out;
}

// Position-aware low-pass filter weight for position j within a segment
// ending at l: c - 1 / (1 + (j / (l - j + 1))^n). Strictly increasing in
// j, so recent items dominate the segment embedding.
inline double lowpass_weight(int j, int l, int k, double c, double n) {
    if (!(k <= j && j <= l)) fail(strfmt("lowpass_weight: need k <= j <= l, got k=%d j=%d l=%d", k, j, l));
    if (!(c > 1.0)) fail("lowpass_weight: c must be > 1");
    if (!(n >= 1.0)) fail("lowpass_weight: n must be >= 1");
    const double ratio = static_cast<double>(j) / static_cast<double>(l - j + 1);
    return c - 1.0 / (1.0 + std::pow(ratio, n));
}

inline Mat embed_candidate(const CandidateSegment& seg, const Mat& mixed_table, double c, double n) {
    Mat e(1, mixed_table.cols);
    int j = seg.window_start;
    for (int idx : seg.item_indices) {
        if (idx < 1 || idx >= mixed_table.rows)
            fail(strfmt("embed_candidate: no embedding for mixed item index %d", idx));
        const double w = lowpass_weight(j, seg.end_index, seg.window_start, c, n);
        const double* row = mixed_table.row(idx);
        for (int t = 0; t < mixed_table.cols; ++t) e.v[t] += w * row[t];
        ++j;
    }
    return e;
}

struct DbProvenance {
    std::string user_id;
    int end_index = 0;
};

struct RetrievalDatabase {
    int d = 0;
    double c = 1.5;
    double n = 2.0;
    int window = 200;
    Mat raw;         // rows x d candidate embeddings
    Mat normalized;  // unit-norm rows for cosine search
    std::vector<DbProvenance> provenance;

    int rows() const { return raw.rows; }
};

namespace detail {

inline void finalize_db(RetrievalDatabase& db, std::vector<double>&& raw_buf) {
    const int rows = static_cast<int>(raw_buf.size()) / db.d;
    db.raw = Mat(rows, db.d);
    db.raw.v = std::move(raw_buf);
    db.normalized = db.raw;
    for (int i = 0; i < rows; ++i) {
        double* r = db.normalized.row(i);
        const double nr = norm2(r, db.d);
        if (nr > 0.0)
            for (int j = 0; j < db.d; ++j) r[j] /= nr;
    }
}

}  // namespace detail

// The database covers training-split sequences only: the chronological
// merge of each user's full source history with the target train prefix.
inline RetrievalDatabase build_database(const Dataset& ds, const Mat& mixed_table, double c,
                                        double n, int window) {
    if (mixed_table.rows != ds.vocab_mixed.size() + 1)
        fail("build_database: mixed embedding table does not match the mixed vocabulary");
    RetrievalDatabase db;
    db.d = mixed_table.cols;
    db.c = c;
    db.n = n;
    db.window = window;

    std::vector<double> raw_buf;
    for (const auto& u : ds.users) {
        MixedIndexView view;
        for (const auto& e : u.mixed) {
            if (e.domain == Domain::kTarget && e.target_pos >= u.train_len()) continue;
            view.emplace_back(e.index, e.domain == Domain::kTarget);
        }
        for (const auto& seg : extract_candidates(view, window)) {
            const Mat e = embed_candidate(seg, mixed_table, c, n);
            raw_buf.insert(raw_buf.end(), e.v.begin(), e.v.end());
            db.provenance.push_back({u.user_id, seg.end_index});
        }
    }
    if (raw_buf.empty()) fail("build_database: no candidate segments; training cannot proceed");
    detail::finalize_db(db, std::move(raw_buf));
    return db;
}

// Top-K rows by cosine similarity; ties broken by lower row index.
// Requests larger than the database return every row with a warning.
inline std::vector<int> retrieve_topk(const Mat& query, const RetrievalDatabase& db, int K) {
    if (db.rows() == 0) fail("retrieve_topk: empty database");
    if (K < 1) fail("retrieve_topk: K must be >= 1");
    if (query.rows != 1 || query.cols != db.d) fail("retrieve_topk: query width mismatch");
    if (K > db.rows()) {
        log_warn(strfmt("retrieve_topk: K=%d exceeds database size %d; returning all rows", K,
                        db.rows()));
        K = db.rows();
    }
    Mat q = query;
    const double nq = norm2(q.data(), db.d);
    if (nq > 0.0)
        for (double& x : q.v) x /= nq;

    std::vector<std::pair<double, int>> sims(db.rows());
    for (int i = 0; i < db.rows(); ++i)
        sims[i] = {dot(q.data(), db.normalized.row(i), db.d), i};
    std::partial_sort(sims.begin(), sims.begin() + K, sims.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    std::vector<int> out(K);
    for (int i = 0; i < K; ++i) out[i] = sims[i].second;
    return out;
}

struct RetrievedNoise {
    Mat mu;     // 1 x d mean offset toward the retrieved segments
    Mat sigma;  // 1 x d elementwise standard deviation (population form)
    Mat z;      // 1 x d sample mu + sigma .* xi
    std::vector<int> segment_ids;
};

inline RetrievedNoise sample_retrieved_noise(const Mat& query, const RetrievalDatabase& db,
                                             const std::vector<int>& segments, Rng& rng) {
    if (segments.empty()) fail("sample_retrieved_noise: need at least one retrieved segment");
    if (query.rows != 1 || query.cols != db.d) fail("sample_retrieved_noise: query width mismatch");
    const int K = static_cast<int>(segments.size());
    RetrievedNoise out;
    out.segment_ids = segments;
    out.mu = Mat(1, db.d);
    out.sigma = Mat(1, db.d);
    out.z = Mat(1, db.d);

    for (int idx : segments) {
        const double* row = db.raw.row(idx);
        for (int j = 0; j < db.d; ++j) out.mu.v[j] += row[j] - query.v[j];
    }
    for (double& x : out.mu.v) x /= K;
    for (int idx : segments) {
        const double* row = db.raw.row(idx);
        for (int j = 0; j < db.d; ++j) {
            const double dev = row[j] - query.v[j] - out.mu.v[j];
            out.sigma.v[j] += dev * dev;
        }
    }
    for (double& x : out.sigma.v) x = std::sqrt(x / K);
    if (K == 1) log_warn("sample_retrieved_noise: single segment, deterministic noise (sigma = 0)");

    for (int j = 0; j < db.d; ++j) out.z.v[j] = out.mu.v[j] + out.sigma.v[j] * rng.normal();
    return out;
}

// ---------------------------------------------------------------------------
// Binary container (little-endian host assumed):
//   "HRDB" u32 version | i32 rows | i32 d | f64 c | f64 n | i32 window |
//   raw doubles | normalized doubles | per row: u32 user-id length,
//   user-id bytes, i32 end index.

inline void save_database(const RetrievalDatabase& db, const std::filesystem::path& path) {
    std::string buf;
    detail::put_bytes(buf, "HRDB", 4);
    detail::put_pod<uint32_t>(buf, 1);
    detail::put_pod<int32_t>(buf, db.rows());
    detail::put_pod<int32_t>(buf, db.d);
    detail::put_pod<double>(buf, db.c);
    detail::put_pod<double>(buf, db.n);
    detail::put_pod<int32_t>(buf, db.window);
    detail::put_bytes(buf, db.raw.data(), db.raw.size() * sizeof(double));
    detail::put_bytes(buf, db.normalized.data(), db.normalized.size() * sizeof(double));
    for (const auto& p : db.provenance) {
        detail::put_pod<uint32_t>(buf, static_cast<uint32_t>(p.user_id.size()));
        detail::put_bytes(buf, p.user_id.data(), p.user_id.size());
        detail::put_pod<int32_t>(buf, p.end_index);
    }
    write_file_atomic(path, buf);
}

inline RetrievalDatabase load_database(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail("database file not found: " + path.string());
    const std::string buf = read_file(path);
    detail::ByteReader r{buf};
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "HRDB", 4) != 0) fail("not a retrieval database file: " + path.string());
    const uint32_t version = r.pod<uint32_t>();
    if (version != 1) fail(strfmt("unsupported database version %u", version));
    RetrievalDatabase db;
    const int rows = r.pod<int32_t>();
    db.d = r.pod<int32_t>();
    db.c = r.pod<double>();
    db.n = r.pod<double>();
    db.window = r.pod<int32_t>();
    if (rows < 0 || db.d < 1) fail("corrupt database header");
    db.raw = Mat(rows, db.d);
    r.read(db.raw.data(), db.raw.size() * sizeof(double));
    db.normalized = Mat(rows, db.d);
    r.read(db.normalized.data(), db.normalized.size() * sizeof(double));
    db.provenance.resize(rows);
    for (int i = 0; i < rows; ++i) {
        const uint32_t len = r.pod<uint32_t>();
        db.provenance[i].user_id.resize(len);
        r.read(db.provenance[i].user_id.data(), len);
        db.provenance[i].end_index = r.pod<int32_t>();
    }
    return db;
}

}  // namespace horizonrec
