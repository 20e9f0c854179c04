// Eager tape-based reverse-mode autodiff over Mat. A Graph is built per
// batch: op functions compute values immediately and record enough to run
// backward() once from a scalar loss node. Parameters live in a ParamStore
// that outlives graphs; their gradients accumulate across examples until
// the optimizer step.
#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "horizonrec/common.hpp"

namespace horizonrec {

struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
    bool trainable = true;
};

class ParamStore {
public:
    int add(const std::string& name, Mat init, bool trainable = true) {
        if (index_.count(name)) fail("duplicate parameter name: " + name);
        Parameter p;
        p.name = name;
        p.grad = Mat(init.rows, init.cols);
        p.adam_m = Mat(init.rows, init.cols);
        p.adam_v = Mat(init.rows, init.cols);
        p.value = std::move(init);
        p.trainable = trainable;
        params_.push_back(std::move(p));
        index_[name] = static_cast<int>(params_.size()) - 1;
        return static_cast<int>(params_.size()) - 1;
    }

    Parameter& operator[](int id) { return params_[id]; }
    const Parameter& operator[](int id) const { return params_[id]; }
    int find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? -1 : it->second;
    }
    size_t count() const { return params_.size(); }
    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }

    void zero_grad() {
        for (auto& p : params_) p.grad.zero();
    }

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, int> index_;
};

namespace detail {

// Deterministic initializers keyed by (seed, parameter name) so creation
// order does not influence initial values.
inline Mat init_normal(uint64_t seed, const std::string& name, int r, int c, double stddev) {
    Mat m(r, c);
    Rng rng = Rng::derive(seed, "init:" + name);
    rng.fill_normal(m, 0.0, stddev);
    return m;
}

inline Mat init_xavier(uint64_t seed, const std::string& name, int fan_in, int fan_out) {
    Mat m(fan_in, fan_out);
    Rng rng = Rng::derive(seed, "init:" + name);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : m.v) x = rng.uniform(-limit, limit);
    return m;
}

inline Mat init_const(int r, int c, double value) {
    Mat m(r, c);
    m.fill(value);
    return m;
}

}  // namespace detail

// Adam with bias correction; no weight decay.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step_count = 0;

    void step(ParamStore& store) {
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (auto& p : store.all()) {
            if (!p.trainable) continue;
            for (size_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad.v[i];
                p.adam_m.v[i] = beta1 * p.adam_m.v[i] + (1.0 - beta1) * g;
                p.adam_v.v[i] = beta2 * p.adam_v.v[i] + (1.0 - beta2) * g * g;
                const double mhat = p.adam_m.v[i] / bc1;
                const double vhat = p.adam_v.v[i] / bc2;
                p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

class Graph {
public:
    explicit Graph(ParamStore* store = nullptr) : store_(store) {}

    void clear() {
        nodes_.clear();
        param_nodes_.clear();
    }

    ParamStore* store() { return store_; }

    // --- node constructors -------------------------------------------------

    int input(Mat m) {
        Node n;
        n.op = Op::kInput;
        n.val = std::move(m);
        return push(std::move(n));
    }

    int param(int pid) {
        auto it = param_nodes_.find(pid);
        if (it != param_nodes_.end()) return it->second;
        Node n;
        n.op = Op::kParam;
        n.pid = pid;
        int id = push(std::move(n));
        param_nodes_[pid] = id;
        return id;
    }

    // Row gather: out row i = table row idx[i]. Backward scatter-adds.
    int gather(int table, std::vector<int> idx) {
        const Mat& t = val(table);
        Node n;
        n.op = Op::kGather;
        n.a = table;
        n.idx = std::move(idx);
        n.val = Mat(static_cast<int>(n.idx.size()), t.cols);
        for (size_t i = 0; i < n.idx.size(); ++i) {
            const int r = n.idx[i];
            if (r < 0 || r >= t.rows) fail(strfmt("gather: row %d out of range [0,%d)", r, t.rows));
            std::memcpy(n.val.row(static_cast<int>(i)), t.row(r), sizeof(double) * t.cols);
        }
        return push(std::move(n));
    }

    int matmul(int a, int b) {
        Node n;
        n.op = Op::kMatMul;
        n.a = a;
        n.b = b;
        mat_mul(val(a), val(b), n.val);
        return push(std::move(n));
    }

    // A * B^T.
    int matmul_nt(int a, int b) {
        Node n;
        n.op = Op::kMatMulNT;
        n.a = a;
        n.b = b;
        mat_mul_nt(val(a), val(b), n.val);
        return push(std::move(n));
    }

    int add(int a, int b) {
        const Mat& x = val(a);
        const Mat& y = val(b);
        if (!x.same_shape(y)) fail("add: shape mismatch");
        Node n;
        n.op = Op::kAdd;
        n.a = a;
        n.b = b;
        n.val = x;
        for (size_t i = 0; i < y.size(); ++i) n.val.v[i] += y.v[i];
        return push(std::move(n));
    }

    // c1*A + c2*B with A, B same shape.
    int axpby(int a, int b, double c1, double c2) {
        const Mat& x = val(a);
        const Mat& y = val(b);
        if (!x.same_shape(y)) fail("axpby: shape mismatch");
        Node n;
        n.op = Op::kAxpby;
        n.a = a;
        n.b = b;
        n.c1 = c1;
        n.c2 = c2;
        n.val = Mat(x.rows, x.cols);
        for (size_t i = 0; i < x.size(); ++i) n.val.v[i] = c1 * x.v[i] + c2 * y.v[i];
        return push(std::move(n));
    }

    int scale(int a, double c) {
        Node n;
        n.op = Op::kScale;
        n.a = a;
        n.c1 = c;
        n.val = val(a);
        for (double& x : n.val.v) x *= c;
        return push(std::move(n));
    }

    // A (m x n) + bias (1 x n) broadcast over rows.
    int add_rowvec(int a, int bias) {
        const Mat& x = val(a);
        const Mat& b = val(bias);
        if (b.rows != 1 || b.cols != x.cols) fail("add_rowvec: bias shape mismatch");
        Node n;
        n.op = Op::kAddRowVec;
        n.a = a;
        n.b = bias;
        n.val = x;
        for (int i = 0; i < x.rows; ++i) {
            double* r = n.val.row(i);
            for (int j = 0; j < x.cols; ++j) r[j] += b.v[j];
        }
        return push(std::move(n));
    }

    int relu(int a) {
        Node n;
        n.op = Op::kRelu;
        n.a = a;
        n.val = val(a);
        for (double& x : n.val.v) x = x > 0.0 ? x : 0.0;
        return push(std::move(n));
    }

    // Row-wise softmax; if causal, entry (i, j) for j > i is masked out.
    int softmax_rows(int a, bool causal) {
        const Mat& x = val(a);
        Node n;
        n.op = Op::kSoftmaxRows;
        n.a = a;
        n.c1 = causal ? 1.0 : 0.0;
        n.val = Mat(x.rows, x.cols);
        for (int i = 0; i < x.rows; ++i) {
            const int limit = causal ? std::min(i + 1, x.cols) : x.cols;
            const double* xr = x.row(i);
            double* yr = n.val.row(i);
            double mx = xr[0];
            for (int j = 1; j < limit; ++j) mx = std::max(mx, xr[j]);
            double sum = 0.0;
            for (int j = 0; j < limit; ++j) {
                yr[j] = std::exp(xr[j] - mx);
                sum += yr[j];
            }
            for (int j = 0; j < limit; ++j) yr[j] /= sum;
        }
        return push(std::move(n));
    }

    // Per-row layer norm with learned gain/bias (1 x n each).
    int layernorm_rows(int a, int gain, int bias, double eps = 1e-6) {
        const Mat& x = val(a);
        const Mat& g = val(gain);
        const Mat& b = val(bias);
        if (g.cols != x.cols || b.cols != x.cols) fail("layernorm: param width mismatch");
        Node n;
        n.op = Op::kLayerNorm;
        n.a = a;
        n.b = gain;
        n.c = bias;
        n.c1 = eps;
        n.val = Mat(x.rows, x.cols);
        n.aux = Mat(x.rows, x.cols + 1);  // per-row: normalized values, then 1/sigma
        for (int i = 0; i < x.rows; ++i) {
            const double* xr = x.row(i);
            double mean = 0.0;
            for (int j = 0; j < x.cols; ++j) mean += xr[j];
            mean /= x.cols;
            double var = 0.0;
            for (int j = 0; j < x.cols; ++j) {
                const double d = xr[j] - mean;
                var += d * d;
            }
            var /= x.cols;
            const double inv_sigma = 1.0 / std::sqrt(var + eps);
            double* hr = n.aux.row(i);
            double* yr = n.val.row(i);
            for (int j = 0; j < x.cols; ++j) {
                hr[j] = (xr[j] - mean) * inv_sigma;
                yr[j] = g.v[j] * hr[j] + b.v[j];
            }
            hr[x.cols] = inv_sigma;
        }
        return push(std::move(n));
    }

    // Inverted dropout; mask drawn once at forward time.
    int dropout(int a, double rate, Rng& rng) {
        if (rate <= 0.0) return a;
        const Mat& x = val(a);
        const double keep = 1.0 - rate;
        Node n;
        n.op = Op::kDropout;
        n.a = a;
        n.c1 = keep;
        n.aux = Mat(x.rows, x.cols);
        n.val = Mat(x.rows, x.cols);
        for (size_t i = 0; i < x.size(); ++i) {
            const double m = rng.uniform() < keep ? 1.0 / keep : 0.0;
            n.aux.v[i] = m;
            n.val.v[i] = x.v[i] * m;
        }
        return push(std::move(n));
    }

    // Single row as a 1 x n node.
    int row_of(int a, int r) {
        const Mat& x = val(a);
        if (r < 0 || r >= x.rows) fail("row_of: index out of range");
        Node n;
        n.op = Op::kRow;
        n.a = a;
        n.idx = {r};
        n.val = Mat(1, x.cols);
        std::memcpy(n.val.data(), x.row(r), sizeof(double) * x.cols);
        return push(std::move(n));
    }

    int concat_cols(int a, int b) {
        const Mat& x = val(a);
        const Mat& y = val(b);
        if (x.rows != y.rows) fail("concat_cols: row mismatch");
        Node n;
        n.op = Op::kConcatCols;
        n.a = a;
        n.b = b;
        n.val = Mat(x.rows, x.cols + y.cols);
        for (int i = 0; i < x.rows; ++i) {
            std::memcpy(n.val.row(i), x.row(i), sizeof(double) * x.cols);
            std::memcpy(n.val.row(i) + x.cols, y.row(i), sizeof(double) * y.cols);
        }
        return push(std::move(n));
    }

    // Three 1 x d rows stacked into a 3 x d matrix.
    int stack3(int a, int b, int c) {
        const Mat& x = val(a);
        const Mat& y = val(b);
        const Mat& z = val(c);
        if (x.rows != 1 || y.rows != 1 || z.rows != 1 || x.cols != y.cols || x.cols != z.cols)
            fail("stack3: expects three 1 x d rows");
        Node n;
        n.op = Op::kStack3;
        n.a = a;
        n.b = b;
        n.c = c;
        n.val = Mat(3, x.cols);
        std::memcpy(n.val.row(0), x.data(), sizeof(double) * x.cols);
        std::memcpy(n.val.row(1), y.data(), sizeof(double) * x.cols);
        std::memcpy(n.val.row(2), z.data(), sizeof(double) * x.cols);
        return push(std::move(n));
    }

    // ||A - B||^2 summed over all entries (scalar node).
    int sqdiff_sum(int a, int b) {
        const Mat& x = val(a);
        const Mat& y = val(b);
        if (!x.same_shape(y)) fail("sqdiff_sum: shape mismatch");
        Node n;
        n.op = Op::kSqDiffSum;
        n.a = a;
        n.b = b;
        n.val = Mat(1, 1);
        double s = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            const double d = x.v[i] - y.v[i];
            s += d * d;
        }
        n.val.v[0] = s;
        return push(std::move(n));
    }

    // Cross-entropy of the row h (1 x d) against embedding table rows
    // 1..V (row 0 is padding and excluded). Fused so the V x d logits
    // matrix never materializes in the tape.
    int cross_entropy_table(int h, int table, int truth_idx) {
        const Mat& hv = val(h);
        const Mat& t = val(table);
        const int vocab = t.rows - 1;
        if (hv.rows != 1 || hv.cols != t.cols) fail("cross_entropy_table: width mismatch");
        if (truth_idx < 1 || truth_idx > vocab)
            fail(strfmt("cross_entropy_table: truth index %d outside vocabulary [1,%d]", truth_idx, vocab));
        Node n;
        n.op = Op::kCrossEntropyTable;
        n.a = h;
        n.b = table;
        n.idx = {truth_idx};
        n.aux = Mat(1, vocab);  // softmax probabilities over items 1..V
        double mx = -1e300;
        for (int j = 1; j <= vocab; ++j) {
            const double z = dot(hv.data(), t.row(j), hv.cols);
            n.aux.v[j - 1] = z;
            mx = std::max(mx, z);
        }
        double sum = 0.0;
        for (int j = 0; j < vocab; ++j) {
            n.aux.v[j] = std::exp(n.aux.v[j] - mx);
            sum += n.aux.v[j];
        }
        double loss = 0.0;
        for (int j = 0; j < vocab; ++j) {
            n.aux.v[j] /= sum;
            if (j == truth_idx - 1) loss = -std::log(n.aux.v[j]);
        }
        n.val = Mat(1, 1);
        n.val.v[0] = loss;
        return push(std::move(n));
    }

    // weight * sum of scalar nodes.
    int weighted_sum(const std::vector<int>& terms, double weight) {
        Node n;
        n.op = Op::kWeightedSum;
        n.idx = terms;
        n.c1 = weight;
        n.val = Mat(1, 1);
        double s = 0.0;
        for (int t : terms) s += val(t).v[0];
        n.val.v[0] = weight * s;
        return push(std::move(n));
    }

    // --- access -------------------------------------------------------------

    const Mat& val(int id) const {
        const Node& n = nodes_[id];
        return n.op == Op::kParam ? (*store_)[n.pid].value : n.val;
    }

    double scalar(int id) const { return val(id).v[0]; }

    // --- backward -----------------------------------------------------------

    void backward(int loss) {
        if (val(loss).size() != 1) fail("backward: loss must be scalar");
        ensure_grad(loss).v[0] = 1.0;
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.grad.empty()) continue;
            step_backward(n);
        }
    }

private:
    enum class Op {
        kInput,
        kParam,
        kGather,
        kMatMul,
        kMatMulNT,
        kAdd,
        kAxpby,
        kScale,
        kAddRowVec,
        kRelu,
        kSoftmaxRows,
        kLayerNorm,
        kDropout,
        kRow,
        kConcatCols,
        kStack3,
        kSqDiffSum,
        kCrossEntropyTable,
        kWeightedSum,
    };

    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;
        int pid = -1;
        double c1 = 0.0, c2 = 0.0;
        Mat val;
        Mat grad;
        Mat aux;
        std::vector<int> idx;
    };

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    Mat& ensure_grad(int id) {
        Node& n = nodes_[id];
        if (n.op == Op::kParam) return (*store_)[n.pid].grad;
        if (n.grad.empty()) n.grad = Mat(val(id).rows, val(id).cols);
        return n.grad;
    }

    void step_backward(Node& n) {
        const Mat& g = n.grad;
        switch (n.op) {
            case Op::kInput:
            case Op::kParam:
                break;
            case Op::kGather: {
                Mat& ga = ensure_grad(n.a);
                for (size_t i = 0; i < n.idx.size(); ++i) {
                    const double* gr = g.row(static_cast<int>(i));
                    double* tr = ga.row(n.idx[i]);
                    for (int j = 0; j < g.cols; ++j) tr[j] += gr[j];
                }
                break;
            }
            case Op::kMatMul: {
                // C = A*B: dA += dC*B^T, dB += A^T*dC.
                mat_mul_nt_acc(g, val(n.b), ensure_grad(n.a));
                mat_mul_tn_acc(val(n.a), g, ensure_grad(n.b));
                break;
            }
            case Op::kMatMulNT: {
                // C = A*B^T: dA += dC*B, dB += dC^T*A.
                mat_mul_acc(g, val(n.b), ensure_grad(n.a));
                mat_mul_tn_acc(g, val(n.a), ensure_grad(n.b));
                break;
            }
            case Op::kAdd: {
                axpy(1.0, g, ensure_grad(n.a));
                axpy(1.0, g, ensure_grad(n.b));
                break;
            }
            case Op::kAxpby: {
                axpy(n.c1, g, ensure_grad(n.a));
                axpy(n.c2, g, ensure_grad(n.b));
                break;
            }
            case Op::kScale: {
                axpy(n.c1, g, ensure_grad(n.a));
                break;
            }
            case Op::kAddRowVec: {
                axpy(1.0, g, ensure_grad(n.a));
                Mat& gb = ensure_grad(n.b);
                for (int i = 0; i < g.rows; ++i) {
                    const double* gr = g.row(i);
                    for (int j = 0; j < g.cols; ++j) gb.v[j] += gr[j];
                }
                break;
            }
            case Op::kRelu: {
                Mat& ga = ensure_grad(n.a);
                const Mat& x = val(n.a);
                for (size_t i = 0; i < x.size(); ++i)
                    if (x.v[i] > 0.0) ga.v[i] += g.v[i];
                break;
            }
            case Op::kSoftmaxRows: {
                // dz = y ⊙ (dy − (dy·y)); masked entries carry y = 0.
                Mat& ga = ensure_grad(n.a);
                const Mat& y = n.val;
                const bool causal = n.c1 != 0.0;
                for (int i = 0; i < y.rows; ++i) {
                    const int limit = causal ? std::min(i + 1, y.cols) : y.cols;
                    const double* yr = y.row(i);
                    const double* gr = g.row(i);
                    double dotv = 0.0;
                    for (int j = 0; j < limit; ++j) dotv += gr[j] * yr[j];
                    double* gar = ga.row(i);
                    for (int j = 0; j < limit; ++j) gar[j] += yr[j] * (gr[j] - dotv);
                }
                break;
            }
            case Op::kLayerNorm: {
                Mat& gx = ensure_grad(n.a);
                Mat& gg = ensure_grad(n.b);
                Mat& gb = ensure_grad(n.c);
                const Mat& gain = val(n.b);
                const int w = g.cols;
                for (int i = 0; i < g.rows; ++i) {
                    const double* gr = g.row(i);
                    const double* hr = n.aux.row(i);  // normalized values
                    const double inv_sigma = hr[w];
                    double mean_gh = 0.0, mean_ghh = 0.0;
                    for (int j = 0; j < w; ++j) {
                        const double gh = gr[j] * gain.v[j];
                        mean_gh += gh;
                        mean_ghh += gh * hr[j];
                    }
                    mean_gh /= w;
                    mean_ghh /= w;
                    double* gxr = gx.row(i);
                    for (int j = 0; j < w; ++j) {
                        const double gh = gr[j] * gain.v[j];
                        gxr[j] += inv_sigma * (gh - mean_gh - hr[j] * mean_ghh);
                        gg.v[j] += gr[j] * hr[j];
                        gb.v[j] += gr[j];
                    }
                }
                break;
            }
            case Op::kDropout: {
                Mat& ga = ensure_grad(n.a);
                for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * n.aux.v[i];
                break;
            }
            case Op::kRow: {
                Mat& ga = ensure_grad(n.a);
                double* r = ga.row(n.idx[0]);
                for (int j = 0; j < g.cols; ++j) r[j] += g.v[j];
                break;
            }
            case Op::kConcatCols: {
                Mat& ga = ensure_grad(n.a);
                Mat& gb = ensure_grad(n.b);
                for (int i = 0; i < g.rows; ++i) {
                    const double* gr = g.row(i);
                    double* ar = ga.row(i);
                    double* br = gb.row(i);
                    for (int j = 0; j < ga.cols; ++j) ar[j] += gr[j];
                    for (int j = 0; j < gb.cols; ++j) br[j] += gr[ga.cols + j];
                }
                break;
            }
            case Op::kStack3: {
                const int w = g.cols;
                double* g0 = ensure_grad(n.a).data();
                double* g1 = ensure_grad(n.b).data();
                double* g2 = ensure_grad(n.c).data();
                for (int j = 0; j < w; ++j) {
                    g0[j] += g.at(0, j);
                    g1[j] += g.at(1, j);
                    g2[j] += g.at(2, j);
                }
                break;
            }
            case Op::kSqDiffSum: {
                Mat& ga = ensure_grad(n.a);
                Mat& gb = ensure_grad(n.b);
                const Mat& x = val(n.a);
                const Mat& y = val(n.b);
                const double s = 2.0 * g.v[0];
                for (size_t i = 0; i < x.size(); ++i) {
                    const double d = s * (x.v[i] - y.v[i]);
                    ga.v[i] += d;
                    gb.v[i] -= d;
                }
                break;
            }
            case Op::kCrossEntropyTable: {
                Mat& gh = ensure_grad(n.a);
                Mat& gt = ensure_grad(n.b);
                const Mat& hv = val(n.a);
                const Mat& t = val(n.b);
                const int vocab = t.rows - 1;
                const int truth = n.idx[0];
                const double s = g.v[0];
                for (int j = 1; j <= vocab; ++j) {
                    const double p = n.aux.v[j - 1] - (j == truth ? 1.0 : 0.0);
                    const double sp = s * p;
                    const double* er = t.row(j);
                    double* gtr = gt.row(j);
                    for (int k = 0; k < hv.cols; ++k) {
                        gh.v[k] += sp * er[k];
                        gtr[k] += sp * hv.v[k];
                    }
                }
                break;
            }
            case Op::kWeightedSum: {
                for (int t : n.idx) ensure_grad(t).v[0] += n.c1 * g.v[0];
                break;
            }
        }
    }

    ParamStore* store_;
    std::vector<Node> nodes_;
    std::unordered_map<int, int> param_nodes_;
};

}  // namespace horizonrec
