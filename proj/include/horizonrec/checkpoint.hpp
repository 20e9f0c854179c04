// Checkpoint container: named parameter tensors plus the flat key-value
// metadata of the run that produced them. Doubles are stored verbatim so
// a save/load round trip is exact.
//
// Layout: "HRCK" u32 version | u32 meta length, meta text | u32 tensor
// count | per tensor: u32 name length, name, i32 rows, i32 cols, values.
#pragma once

#include <filesystem>
#include <map>

#include "horizonrec/autograd.hpp"

namespace horizonrec {

struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Mat>> tensors;

    const Mat* find(const std::string& name) const {
        for (const auto& [n, m] : tensors)
            if (n == name) return &m;
        return nullptr;
    }

    std::string meta_or(const std::string& key, const std::string& fallback) const {
        auto it = meta.find(key);
        return it == meta.end() ? fallback : it->second;
    }

    void require_meta(const std::string& key, const std::string& expected,
                      const std::string& what) const {
        auto it = meta.find(key);
        if (it == meta.end() || it->second != expected)
            fail("checkpoint mismatch: " + what + " (" + key + " is '" +
                 (it == meta.end() ? "<missing>" : it->second) + "', expected '" + expected + "')");
    }
};

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    std::string meta_text;
    for (const auto& [k, v] : ck.meta) meta_text += k + " = " + v + "\n";
    std::string buf;
    detail::put_bytes(buf, "HRCK", 4);
    detail::put_pod<uint32_t>(buf, 1);
    detail::put_pod<uint32_t>(buf, static_cast<uint32_t>(meta_text.size()));
    detail::put_bytes(buf, meta_text.data(), meta_text.size());
    detail::put_pod<uint32_t>(buf, static_cast<uint32_t>(ck.tensors.size()));
    for (const auto& [name, m] : ck.tensors) {
        detail::put_pod<uint32_t>(buf, static_cast<uint32_t>(name.size()));
        detail::put_bytes(buf, name.data(), name.size());
        detail::put_pod<int32_t>(buf, m.rows);
        detail::put_pod<int32_t>(buf, m.cols);
        detail::put_bytes(buf, m.data(), m.size() * sizeof(double));
    }
    write_file_atomic(path, buf);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail("checkpoint not found: " + path.string());
    const std::string buf = read_file(path);
    detail::ByteReader r{buf};
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "HRCK", 4) != 0) fail("not a checkpoint file: " + path.string());
    const uint32_t version = r.pod<uint32_t>();
    if (version != 1) fail(strfmt("unsupported checkpoint version %u", version));

    Checkpoint ck;
    const uint32_t meta_len = r.pod<uint32_t>();
    std::string meta_text(meta_len, '\0');
    r.read(meta_text.data(), meta_len);
    for (const auto& raw : split(meta_text, '\n')) {
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        ck.meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    const uint32_t count = r.pod<uint32_t>();
    ck.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.pod<uint32_t>();
        std::string name(name_len, '\0');
        r.read(name.data(), name_len);
        const int rows = r.pod<int32_t>();
        const int cols = r.pod<int32_t>();
        if (rows < 0 || cols < 0) fail("corrupt checkpoint tensor header: " + name);
        Mat m(rows, cols);
        r.read(m.data(), m.size() * sizeof(double));
        ck.tensors.emplace_back(std::move(name), std::move(m));
    }
    return ck;
}

inline Checkpoint checkpoint_from_store(const ParamStore& store,
                                        std::map<std::string, std::string> meta) {
    Checkpoint ck;
    ck.meta = std::move(meta);
    for (const auto& p : store.all()) ck.tensors.emplace_back(p.name, p.value);
    return ck;
}

// Copies tensors into matching parameters by name. Returns the number of
// parameters filled; missing names fail when `require_all` is set.
inline int load_into_store(const Checkpoint& ck, ParamStore& store, bool require_all = true) {
    int filled = 0;
    for (auto& p : store.all()) {
        const Mat* m = ck.find(p.name);
        if (!m) {
            if (require_all) fail("checkpoint missing tensor: " + p.name);
            continue;
        }
        if (m->rows != p.value.rows || m->cols != p.value.cols)
            fail(strfmt("checkpoint tensor %s has shape %dx%d, expected %dx%d", p.name.c_str(),
                        m->rows, m->cols, p.value.rows, p.value.cols));
        p.value = *m;
        ++filled;
    }
    return filled;
}

}  // namespace horizonrec
