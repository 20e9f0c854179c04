// Shared primitives: dense row-major matrices, a fully-specified RNG,
// logging, and small filesystem/string helpers used across the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace horizonrec {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string strfmt(const char* fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    char buf[1024];
    std::vsnprintf(buf, sizeof(buf), fmt, ap);
    va_end(ap);
    return std::string(buf);
}

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void log_line(const char* level, const std::string& msg) {
    std::fprintf(stderr, "[%s] %s\n", level, msg.c_str());
}
inline void log_info(const std::string& msg) { log_line("info", msg); }
inline void log_warn(const std::string& msg) { log_line("warn", msg); }

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles. Vectors are 1xN matrices.

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(0.0); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    static Mat zeros(int r, int c) { return Mat(r, c); }
};

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const double* a, int n) { return std::sqrt(dot(a, a, n)); }

inline double cosine(const double* a, const double* b, int n) {
    double na = norm2(a, n), nb = norm2(b, n);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b, n) / (na * nb);
}

// C = A * B, A is m x k, B is k x n.
inline void mat_mul(const Mat& a, const Mat& b, Mat& c) {
    c = Mat(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ar[k];
            if (aik == 0.0) continue;
            const double* br = b.row(k);
            for (int j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
        }
    }
}

// C = A * B^T, A is m x k, B is n x k.
inline void mat_mul_nt(const Mat& a, const Mat& b, Mat& c) {
    c = Mat(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int j = 0; j < b.rows; ++j) cr[j] = dot(ar, b.row(j), a.cols);
    }
}

// C += A^T * B, A is k x m, B is k x n, C is m x n (accumulating).
inline void mat_mul_tn_acc(const Mat& a, const Mat& b, Mat& c) {
    for (int k = 0; k < a.rows; ++k) {
        const double* ar = a.row(k);
        const double* br = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = ar[i];
            if (aki == 0.0) continue;
            double* cr = c.row(i);
            for (int j = 0; j < b.cols; ++j) cr[j] += aki * br[j];
        }
    }
}

// C += A * B (accumulating variant of mat_mul).
inline void mat_mul_acc(const Mat& a, const Mat& b, Mat& c) {
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ar[k];
            if (aik == 0.0) continue;
            const double* br = b.row(k);
            for (int j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
        }
    }
}

// C += A * B^T (accumulating).
inline void mat_mul_nt_acc(const Mat& a, const Mat& b, Mat& c) {
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int j = 0; j < b.rows; ++j) cr[j] += dot(ar, b.row(j), a.cols);
    }
}

inline void axpy(double alpha, const Mat& x, Mat& y) {
    for (size_t i = 0; i < x.size(); ++i) y.v[i] += alpha * x.v[i];
}

// ---------------------------------------------------------------------------
// RNG. mt19937_64 output is fully specified by the standard; the
// distributions below avoid the implementation-defined std:: ones so that
// seeded runs are reproducible across toolchains.

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64_str(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    // Independent stream derived from (seed, tag, a, b).
    static Rng derive(uint64_t seed, const std::string& tag, uint64_t a = 0, uint64_t b = 0) {
        uint64_t h = fnv1a64(&seed, sizeof(seed));
        h = fnv1a64_str(tag, h);
        h = fnv1a64(&a, sizeof(a), h);
        h = fnv1a64(&b, sizeof(b), h);
        return Rng(h);
    }

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return r % n;
    }

    // Standard normal via Box-Muller (deterministic, cached pair).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    void fill_normal(Mat& m, double mean, double stddev) {
        for (double& x : m.v) x = normal(mean, stddev);
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i)
            std::swap(xs[i - 1], xs[uniform_int(i)]);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Worker pool sizing: HORIZONREC_THREADS caps parallelism (default 1 thread
// beyond which results must stay order-independent).

inline int worker_threads() {
    if (const char* env = std::getenv("HORIZONREC_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n). Each invocation must touch disjoint state.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    const int nthreads = std::min(worker_threads(), n);
    if (nthreads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
        threads.emplace_back([&, t] {
            for (int i = t; i < n; i += nthreads) fn(i);
        });
    }
    for (auto& th : threads) th.join();
}

// ---------------------------------------------------------------------------
// Binary buffer helpers (little-endian host assumed).

namespace detail {

inline void put_bytes(std::string& buf, const void* p, size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_pod(std::string& buf, T v) {
    put_bytes(buf, &v, sizeof(T));
}

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;
    void read(void* p, size_t n) {
        if (pos + n > buf.size()) fail("corrupt binary file: unexpected end of data");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    template <typename T>
    T pod() {
        T v;
        read(&v, sizeof(T));
        return v;
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Small string/file helpers.

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_i64(const std::string& s, int64_t& out) {
    if (s.empty()) return false;
    size_t i = 0;
    bool neg = false;
    if (s[0] == '+' || s[0] == '-') {
        neg = s[0] == '-';
        i = 1;
        if (s.size() == 1) return false;
    }
    int64_t val = 0;
    for (; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        val = val * 10 + (s[i] - '0');
    }
    out = neg ? -val : val;
    return true;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) fail("cannot open file: " + path.string());
    std::string out;
    char buf[65536];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) out.append(buf, n);
    std::fclose(f);
    return out;
}

// Write-then-rename so partially written outputs never appear under the
// final name.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path tmp = path;
    tmp += ".tmp";
    std::FILE* f = std::fopen(tmp.string().c_str(), "wb");
    if (!f) fail("cannot write file: " + tmp.string());
    if (!content.empty() && std::fwrite(content.data(), 1, content.size(), f) != content.size()) {
        std::fclose(f);
        fail("short write: " + tmp.string());
    }
    std::fclose(f);
    fs::rename(tmp, path);
}

}  // namespace horizonrec
