// Interaction logs, per-domain / mixed sequences, leave-one-out splits and
// the on-disk dataset directory.
//
// Dataset directory layout (all line-oriented text):
//   users.txt         one user id per line, defines user index order
//   vocab_source.txt  "<index>\t<item>"  (indices start at 1; 0 = padding)
//   vocab_target.txt  "<index>\t<item>"
//   vocab_mixed.txt   "<index>\t<S|T>:<item>"
//   source.txt        "<user>\t<item>,<item>,..."  chronological
//   target.txt        "<user>\t<item>,<item>,..."  chronological
//   mixed.txt         "<user>\t<S|T>:<item>,..."   chronological merge
//   splits.txt        "<user>\t<train_len>\t<val_item>\t<test_item>"
//   dataset.meta      "key = value" lines
//
// Vocabularies cover training-visible items only (all source positions,
// target positions up to the train prefix). Held-out items other users
// never interacted with in training resolve to index 0 and are skipped,
// with a logged count.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "horizonrec/common.hpp"

namespace horizonrec {

enum class Domain { kSource, kTarget };

inline const char* domain_name(Domain d) { return d == Domain::kSource ? "source" : "target"; }

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    int64_t timestamp = 0;
    Domain domain = Domain::kSource;
};

struct DomainSequence {
    std::string user_id;
    Domain domain = Domain::kSource;
    std::vector<std::string> items;
    std::vector<int64_t> timestamps;
};

struct MixedEntry {
    std::string item_id;
    Domain domain;
    int64_t timestamp;
};

struct MixedSequence {
    std::string user_id;
    std::vector<MixedEntry> entries;
};

struct SplitSpec {
    std::vector<std::string> train_items;
    std::string validation_item;
    std::string test_item;
};

// ---------------------------------------------------------------------------
// Raw log parsing: (user, item, timestamp) rows, tab- or comma-separated
// (detected from the first data row of each file).

inline void validate_token(const std::string& tok, const char* what, int lineno) {
    if (tok.empty()) fail(strfmt("line %d: empty %s", lineno, what));
    if (tok.find_first_of("\t,\n\r") != std::string::npos)
        fail(strfmt("line %d: %s contains a tab, comma or newline", lineno, what));
}

inline std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path,
                                                        Domain domain, bool skip_header = false) {
    if (!std::filesystem::exists(path)) fail("interaction file not found: " + path.string());
    const std::string text = read_file(path);
    std::vector<InteractionRecord> out;
    char sep = 0;
    int lineno = 0;
    bool header_pending = skip_header;
    for (const auto& raw : split(text, '\n')) {
        ++lineno;
        std::string line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        if (sep == 0) sep = line.find('\t') != std::string::npos ? '\t' : ',';
        auto fields = split(line, sep);
        if (fields.size() != 3)
            fail(strfmt("line %d: expected 3 columns (user, item, timestamp), got %zu", lineno,
                        fields.size()));
        validate_token(fields[0], "user id", lineno);
        validate_token(fields[1], "item id", lineno);
        int64_t ts = 0;
        if (!parse_i64(trim(fields[2]), ts) || ts < 0)
            fail(strfmt("line %d: bad timestamp '%s'", lineno, fields[2].c_str()));
        out.push_back({fields[0], fields[1], ts, domain});
    }
    if (out.empty()) log_warn("no interactions in " + path.string());
    return out;
}

// Users with at least `min_interactions` records in BOTH domains.
inline std::vector<std::string> filter_users(const std::vector<InteractionRecord>& source_records,
                                             const std::vector<InteractionRecord>& target_records,
                                             int min_interactions = 3) {
    if (min_interactions < 1) fail("filter_users: min_interactions must be >= 1");
    std::unordered_map<std::string, int> src_count, tgt_count;
    for (const auto& r : source_records) ++src_count[r.user_id];
    for (const auto& r : target_records) ++tgt_count[r.user_id];
    std::vector<std::string> kept;
    for (const auto& [user, cnt] : src_count) {
        if (cnt < min_interactions) continue;
        auto it = tgt_count.find(user);
        if (it != tgt_count.end() && it->second >= min_interactions) kept.push_back(user);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

// Stable chronological merge; on equal timestamps the source item is
// placed before the target item.
inline MixedSequence build_mixed_sequence(const DomainSequence& seq_s, const DomainSequence& seq_t) {
    if (seq_s.user_id != seq_t.user_id)
        fail("build_mixed_sequence: sequences belong to different users (" + seq_s.user_id + " vs " +
             seq_t.user_id + ")");
    MixedSequence out;
    out.user_id = seq_s.user_id;
    out.entries.reserve(seq_s.items.size() + seq_t.items.size());
    size_t i = 0, j = 0;
    while (i < seq_s.items.size() || j < seq_t.items.size()) {
        const bool take_source =
            j >= seq_t.items.size() ||
            (i < seq_s.items.size() && seq_s.timestamps[i] <= seq_t.timestamps[j]);
        if (take_source) {
            out.entries.push_back({seq_s.items[i], Domain::kSource, seq_s.timestamps[i]});
            ++i;
        } else {
            out.entries.push_back({seq_t.items[j], Domain::kTarget, seq_t.timestamps[j]});
            ++j;
        }
    }
    return out;
}

// Last target item -> test, penultimate -> validation, remainder -> train.
inline SplitSpec split_leave_one_out(const DomainSequence& seq_t) {
    const size_t n = seq_t.items.size();
    if (n < 3)
        fail(strfmt("split_leave_one_out: need >= 3 target interactions, user %s has %zu",
                    seq_t.user_id.c_str(), n));
    SplitSpec s;
    s.train_items.assign(seq_t.items.begin(), seq_t.items.end() - 2);
    s.validation_item = seq_t.items[n - 2];
    s.test_item = seq_t.items[n - 1];
    return s;
}

// ---------------------------------------------------------------------------
// Materialized dataset.

struct Vocab {
    std::unordered_map<std::string, int> to_index;  // 1-based; 0 is padding
    std::vector<std::string> tokens;                // tokens[0] = ""

    Vocab() : tokens(1) {}

    int add(const std::string& tok) {
        auto [it, inserted] = to_index.emplace(tok, static_cast<int>(tokens.size()));
        if (inserted) tokens.push_back(tok);
        return it->second;
    }
    int lookup(const std::string& tok) const {
        auto it = to_index.find(tok);
        return it == to_index.end() ? 0 : it->second;
    }
    int size() const { return static_cast<int>(tokens.size()) - 1; }
};

struct IndexedMixedEntry {
    int index = 0;       // mixed vocabulary index, 0 if the item is out of vocabulary
    Domain domain = Domain::kSource;
    int target_pos = -1; // position within the user's target sequence, -1 for source entries
};

struct UserData {
    std::string user_id;
    std::vector<std::string> src_raw, tgt_raw;
    std::vector<int> src;                  // source vocab indices, all >= 1
    std::vector<int> tgt;                  // target vocab indices; held-out slots may be 0
    std::vector<IndexedMixedEntry> mixed;  // full chronological merge

    int target_len() const { return static_cast<int>(tgt.size()); }
    int train_len() const { return target_len() - 2; }
    int val_index() const { return target_len() - 2; }
    int test_index() const { return target_len() - 1; }
};

enum class Split { kValidation, kTest };

inline const char* split_name(Split s) { return s == Split::kValidation ? "validation" : "test"; }

struct Dataset {
    std::vector<UserData> users;
    Vocab vocab_source, vocab_target, vocab_mixed;
    int min_interactions = 3;
    int max_len = 200;
    int dropped_oov_items = 0;   // distinct held-out items absent from training
    int skipped_eval_rows = 0;   // evaluation rows lost to out-of-vocabulary items
    std::map<std::string, std::string> meta;

    int n_users() const { return static_cast<int>(users.size()); }

    // Target-side model input for one phase, OOV entries removed.
    // Training input excludes the label (the last train item) and the two
    // held-out items; validation input is the train prefix; test input
    // additionally includes the validation item.
    std::vector<int> target_input(int user, int drop_last) const {
        const UserData& u = users[user];
        std::vector<int> out;
        const int end = u.target_len() - drop_last;
        for (int i = 0; i < end; ++i)
            if (u.tgt[i] > 0) out.push_back(u.tgt[i]);
        return out;
    }

    // Mixed-domain model input: the chronological merge with the last
    // `drop_last_target` target entries removed (all source entries stay).
    std::vector<int> mixed_input(int user, int drop_last_target) const {
        const UserData& u = users[user];
        const int cutoff = u.target_len() - drop_last_target;
        std::vector<int> out;
        for (const auto& e : u.mixed) {
            if (e.domain == Domain::kTarget && e.target_pos >= cutoff) continue;
            if (e.index > 0) out.push_back(e.index);
        }
        return out;
    }

    // Label for the canonical training example; 0 when the user has no
    // usable example (train prefix of length 1).
    int train_label(int user) const {
        const UserData& u = users[user];
        return u.train_len() >= 2 ? u.tgt[u.train_len() - 1] : 0;
    }

    int held_out_label(int user, Split split) const {
        const UserData& u = users[user];
        return split == Split::kValidation ? u.tgt[u.val_index()] : u.tgt[u.test_index()];
    }
};

struct PreprocessOptions {
    int min_interactions = 3;
    int max_len = 200;
};

namespace detail {

inline std::vector<DomainSequence> group_and_sort(const std::vector<InteractionRecord>& records,
                                                  Domain domain) {
    std::unordered_map<std::string, DomainSequence> by_user;
    std::vector<std::string> order;
    for (const auto& r : records) {
        auto [it, inserted] = by_user.try_emplace(r.user_id);
        if (inserted) {
            it->second.user_id = r.user_id;
            it->second.domain = domain;
            order.push_back(r.user_id);
        }
        it->second.items.push_back(r.item_id);
        it->second.timestamps.push_back(r.timestamp);
    }
    std::vector<DomainSequence> out;
    out.reserve(order.size());
    for (const auto& user : order) {
        DomainSequence& seq = by_user[user];
        // Stable sort by timestamp keeps the file order on ties.
        std::vector<int> perm(seq.items.size());
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
        std::stable_sort(perm.begin(), perm.end(),
                         [&](int a, int b) { return seq.timestamps[a] < seq.timestamps[b]; });
        DomainSequence sorted;
        sorted.user_id = seq.user_id;
        sorted.domain = domain;
        for (int i : perm) {
            sorted.items.push_back(seq.items[i]);
            sorted.timestamps.push_back(seq.timestamps[i]);
        }
        out.push_back(std::move(sorted));
    }
    return out;
}

inline void truncate_to_recent(DomainSequence& seq, int max_len) {
    if (static_cast<int>(seq.items.size()) <= max_len) return;
    const size_t drop = seq.items.size() - max_len;
    seq.items.erase(seq.items.begin(), seq.items.begin() + drop);
    seq.timestamps.erase(seq.timestamps.begin(), seq.timestamps.begin() + drop);
}

}  // namespace detail

inline Dataset preprocess(const std::vector<InteractionRecord>& source_records,
                          const std::vector<InteractionRecord>& target_records,
                          const PreprocessOptions& opts = {}) {
    if (opts.min_interactions < 1) fail("preprocess: min_interactions must be >= 1");
    if (opts.max_len < 3) fail("preprocess: max_len must be >= 3");

    const auto kept = filter_users(source_records, target_records, opts.min_interactions);
    std::unordered_map<std::string, bool> keep;
    for (const auto& u : kept) keep[u] = true;

    auto src_seqs = detail::group_and_sort(source_records, Domain::kSource);
    auto tgt_seqs = detail::group_and_sort(target_records, Domain::kTarget);
    std::unordered_map<std::string, DomainSequence*> src_by_user, tgt_by_user;
    for (auto& s : src_seqs) src_by_user[s.user_id] = &s;
    for (auto& s : tgt_seqs) tgt_by_user[s.user_id] = &s;

    Dataset ds;
    ds.min_interactions = opts.min_interactions;
    ds.max_len = opts.max_len;

    // First pass: build truncated sequences and training-visible vocabularies.
    struct Staged {
        DomainSequence src, tgt;
        MixedSequence mixed;
    };
    std::vector<Staged> staged;
    for (const auto& user : kept) {
        Staged st;
        st.src = *src_by_user[user];
        st.tgt = *tgt_by_user[user];
        detail::truncate_to_recent(st.src, opts.max_len);
        detail::truncate_to_recent(st.tgt, opts.max_len);
        if (static_cast<int>(st.tgt.items.size()) < 3) continue;  // cannot split
        st.mixed = build_mixed_sequence(st.src, st.tgt);
        staged.push_back(std::move(st));
    }

    for (const auto& st : staged) {
        for (const auto& item : st.src.items) ds.vocab_source.add(item);
        const int train_len = static_cast<int>(st.tgt.items.size()) - 2;
        for (int i = 0; i < train_len; ++i) ds.vocab_target.add(st.tgt.items[i]);
    }
    for (int i = 1; i <= ds.vocab_source.size(); ++i)
        ds.vocab_mixed.add("S:" + ds.vocab_source.tokens[i]);
    for (int i = 1; i <= ds.vocab_target.size(); ++i)
        ds.vocab_mixed.add("T:" + ds.vocab_target.tokens[i]);

    // Second pass: index sequences; held-out items may be out of vocabulary.
    std::unordered_map<std::string, bool> dropped_items;
    for (const auto& st : staged) {
        UserData u;
        u.user_id = st.src.user_id;
        u.src_raw = st.src.items;
        u.tgt_raw = st.tgt.items;
        for (const auto& item : st.src.items) u.src.push_back(ds.vocab_source.lookup(item));
        const int q = static_cast<int>(st.tgt.items.size());
        for (int i = 0; i < q; ++i) {
            const int idx = ds.vocab_target.lookup(st.tgt.items[i]);
            if (idx == 0) {
                dropped_items[st.tgt.items[i]] = true;
                ++ds.skipped_eval_rows;
            }
            u.tgt.push_back(idx);
        }
        int tgt_pos = 0;
        for (const auto& e : st.mixed.entries) {
            IndexedMixedEntry ie;
            ie.domain = e.domain;
            if (e.domain == Domain::kSource) {
                ie.index = ds.vocab_mixed.lookup("S:" + e.item_id);
            } else {
                ie.index = ds.vocab_mixed.lookup("T:" + e.item_id);
                ie.target_pos = tgt_pos++;
            }
            u.mixed.push_back(ie);
        }
        ds.users.push_back(std::move(u));
    }
    ds.dropped_oov_items = static_cast<int>(dropped_items.size());
    if (ds.dropped_oov_items > 0)
        log_warn(strfmt("%d held-out item(s) never seen in training were dropped (%d eval rows affected)",
                        ds.dropped_oov_items, ds.skipped_eval_rows));
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset directory IO.

namespace detail {

inline std::string seq_line(const std::string& user, const std::vector<std::string>& items) {
    std::string line = user;
    line += '\t';
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) line += ',';
        line += items[i];
    }
    line += '\n';
    return line;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::string users_txt, source_txt, target_txt, mixed_txt, splits_txt;
    for (const auto& u : ds.users) {
        users_txt += u.user_id + "\n";
        source_txt += detail::seq_line(u.user_id, u.src_raw);
        target_txt += detail::seq_line(u.user_id, u.tgt_raw);
        std::vector<std::string> mixed_tokens;
        int tgt_pos = 0;
        size_t src_pos = 0;
        for (const auto& e : u.mixed) {
            if (e.domain == Domain::kSource)
                mixed_tokens.push_back("S:" + u.src_raw[src_pos++]);
            else
                mixed_tokens.push_back("T:" + u.tgt_raw[tgt_pos++]);
        }
        mixed_txt += detail::seq_line(u.user_id, mixed_tokens);
        splits_txt += strfmt("%s\t%d\t%s\t%s\n", u.user_id.c_str(), u.train_len(),
                             u.tgt_raw[u.val_index()].c_str(), u.tgt_raw[u.test_index()].c_str());
    }
    auto vocab_txt = [](const Vocab& v) {
        std::string out;
        for (int i = 1; i <= v.size(); ++i) out += strfmt("%d\t%s\n", i, v.tokens[i].c_str());
        return out;
    };
    write_file_atomic(dir / "users.txt", users_txt);
    write_file_atomic(dir / "source.txt", source_txt);
    write_file_atomic(dir / "target.txt", target_txt);
    write_file_atomic(dir / "mixed.txt", mixed_txt);
    write_file_atomic(dir / "splits.txt", splits_txt);
    write_file_atomic(dir / "vocab_source.txt", vocab_txt(ds.vocab_source));
    write_file_atomic(dir / "vocab_target.txt", vocab_txt(ds.vocab_target));
    write_file_atomic(dir / "vocab_mixed.txt", vocab_txt(ds.vocab_mixed));

    std::string meta;
    meta += strfmt("n_users = %d\n", ds.n_users());
    meta += strfmt("n_items_source = %d\n", ds.vocab_source.size());
    meta += strfmt("n_items_target = %d\n", ds.vocab_target.size());
    meta += strfmt("min_interactions = %d\n", ds.min_interactions);
    meta += strfmt("max_len = %d\n", ds.max_len);
    meta += strfmt("dropped_oov_items = %d\n", ds.dropped_oov_items);
    meta += strfmt("skipped_eval_rows = %d\n", ds.skipped_eval_rows);
    for (const auto& [k, v] : ds.meta) meta += k + " = " + v + "\n";
    write_file_atomic(dir / "dataset.meta", meta);
}

inline Vocab load_vocab(const std::filesystem::path& path) {
    Vocab v;
    int lineno = 0;
    for (const auto& raw : split(read_file(path), '\n')) {
        ++lineno;
        if (trim(raw).empty()) continue;
        auto fields = split(raw, '\t');
        if (fields.size() != 2) fail(strfmt("%s line %d: bad vocab row", path.string().c_str(), lineno));
        const int idx = v.add(fields[1]);
        int64_t expect = 0;
        if (!parse_i64(fields[0], expect) || expect != idx)
            fail(strfmt("%s line %d: vocabulary indices must be dense and start at 1",
                        path.string().c_str(), lineno));
    }
    return v;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const char* f : {"users.txt", "source.txt", "target.txt", "mixed.txt", "splits.txt",
                          "vocab_source.txt", "vocab_target.txt", "vocab_mixed.txt"})
        if (!fs::exists(dir / f)) fail("dataset directory missing " + std::string(f) + ": " + dir.string());

    Dataset ds;
    ds.vocab_source = load_vocab(dir / "vocab_source.txt");
    ds.vocab_target = load_vocab(dir / "vocab_target.txt");
    ds.vocab_mixed = load_vocab(dir / "vocab_mixed.txt");

    auto parse_seq_file = [&](const fs::path& p) {
        std::map<std::string, std::vector<std::string>> out;
        std::vector<std::string> order;
        for (const auto& raw : split(read_file(p), '\n')) {
            if (trim(raw).empty()) continue;
            auto fields = split(raw, '\t');
            if (fields.size() != 2) fail("bad sequence line in " + p.string());
            out[fields[0]] = split(fields[1], ',');
            order.push_back(fields[0]);
        }
        return out;
    };
    auto source = parse_seq_file(dir / "source.txt");
    auto target = parse_seq_file(dir / "target.txt");
    auto mixed = parse_seq_file(dir / "mixed.txt");

    std::unordered_map<std::string, bool> dropped_items;
    for (const auto& raw : split(read_file(dir / "users.txt"), '\n')) {
        const std::string user = trim(raw);
        if (user.empty()) continue;
        if (!source.count(user) || !target.count(user) || !mixed.count(user))
            fail("dataset user missing from sequence files: " + user);
        UserData u;
        u.user_id = user;
        u.src_raw = source[user];
        u.tgt_raw = target[user];
        if (u.tgt_raw.size() < 3) fail("dataset user with < 3 target items: " + user);
        for (const auto& item : u.src_raw) {
            const int idx = ds.vocab_source.lookup(item);
            if (idx == 0) fail("source item missing from vocabulary: " + item);
            u.src.push_back(idx);
        }
        const int q = static_cast<int>(u.tgt_raw.size());
        for (int i = 0; i < q; ++i) {
            const int idx = ds.vocab_target.lookup(u.tgt_raw[i]);
            if (idx == 0) {
                if (i < q - 2) fail("training item missing from vocabulary: " + u.tgt_raw[i]);
                dropped_items[u.tgt_raw[i]] = true;
                ++ds.skipped_eval_rows;
            }
            u.tgt.push_back(idx);
        }
        int tgt_pos = 0;
        size_t src_pos = 0, tgt_seen = 0;
        for (const auto& tok : mixed[user]) {
            if (tok.size() < 2 || (tok[0] != 'S' && tok[0] != 'T') || tok[1] != ':')
                fail("bad mixed token for user " + user + ": " + tok);
            const std::string item = tok.substr(2);
            IndexedMixedEntry ie;
            if (tok[0] == 'S') {
                ie.domain = Domain::kSource;
                if (src_pos >= u.src_raw.size() || u.src_raw[src_pos] != item)
                    fail("mixed sequence disagrees with source sequence for user " + user);
                ++src_pos;
                ie.index = ds.vocab_mixed.lookup("S:" + item);
            } else {
                ie.domain = Domain::kTarget;
                if (tgt_seen >= u.tgt_raw.size() || u.tgt_raw[tgt_seen] != item)
                    fail("mixed sequence disagrees with target sequence for user " + user);
                ++tgt_seen;
                ie.target_pos = tgt_pos++;
                ie.index = ds.vocab_mixed.lookup("T:" + item);
            }
            u.mixed.push_back(ie);
        }
        if (src_pos != u.src_raw.size() || tgt_seen != u.tgt_raw.size())
            fail("mixed sequence does not cover all interactions for user " + user);
        ds.users.push_back(std::move(u));
    }
    ds.dropped_oov_items = static_cast<int>(dropped_items.size());

    if (fs::exists(dir / "dataset.meta")) {
        for (const auto& raw : split(read_file(dir / "dataset.meta"), '\n')) {
            std::string line = trim(raw);
            if (line.empty()) continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key == "min_interactions") ds.min_interactions = std::stoi(value);
            else if (key == "max_len") ds.max_len = std::stoi(value);
            else if (key == "n_users" || key == "n_items_source" || key == "n_items_target" ||
                     key == "dropped_oov_items" || key == "skipped_eval_rows") continue;  // recomputed
            else ds.meta[key] = value;
        }
    }
    return ds;
}

// FNV-1a over the canonical dataset files; stable across identical inputs.
inline std::string dataset_hash(const std::filesystem::path& dir) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const char* f : {"users.txt", "source.txt", "target.txt", "mixed.txt", "splits.txt",
                          "vocab_source.txt", "vocab_target.txt", "vocab_mixed.txt"}) {
        const auto p = dir / f;
        if (!std::filesystem::exists(p)) continue;
        const std::string content = read_file(p);
        h = fnv1a64(content.data(), content.size(), h);
    }
    return strfmt("%016llx", static_cast<unsigned long long>(h));
}

}  // namespace horizonrec
