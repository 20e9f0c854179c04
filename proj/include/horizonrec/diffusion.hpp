// Noise schedule, forward injection of retrieved noise, the
// mixed-conditioned attention denoiser and the deterministic reverse
// chain. The denoiser treats [noised state, condition, step embedding]
// as a 3-token set, attends over it, and adds a feed-forward update to a
// residual from the raw noised state; the output projection starts at
// zero so an untrained step is the identity.
#pragma once

#include <functional>

#include "horizonrec/autograd.hpp"

namespace horizonrec {

struct DiffusionSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[t-1] for step t
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product of alpha

    double alpha_bar_at(int t) const {
        if (t < 1 || t > T) fail(strfmt("schedule: step %d outside [1,%d]", t, T));
        return alpha_bar[t - 1];
    }
};

inline DiffusionSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) fail("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        fail("make_schedule: need 0 < beta_start <= beta_end < 1");
    DiffusionSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        s.beta[t - 1] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[t - 1] = 1.0 - s.beta[t - 1];
        prod *= s.alpha[t - 1];
        s.alpha_bar[t - 1] = prod;
    }
    return s;
}

inline Mat sinusoidal_step_embedding(int t, int d) {
    Mat e(1, d);
    for (int j = 0; j < d; ++j) {
        const double freq = std::pow(10000.0, -2.0 * (j / 2) / static_cast<double>(d));
        e.v[j] = (j % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    }
    return e;
}

// h_bar_t = sqrt(abar_t) h + sqrt(1 - abar_t) z.
inline Mat forward_noise(const Mat& h, const Mat& z, int t, const DiffusionSchedule& sched) {
    if (!h.same_shape(z)) fail("forward_noise: shape mismatch");
    const double ab = sched.alpha_bar_at(t);
    Mat out(h.rows, h.cols);
    const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    for (size_t i = 0; i < h.size(); ++i) out.v[i] = cs * h.v[i] + cn * z.v[i];
    return out;
}

// Tape variant: differentiable in h, the noise enters as a constant.
inline int forward_noise(Graph& g, int h, const Mat& z, int t, const DiffusionSchedule& sched) {
    const double ab = sched.alpha_bar_at(t);
    return g.axpby(h, g.input(z), std::sqrt(ab), std::sqrt(1.0 - ab));
}

struct Denoiser {
    int d = 0;
    int wq = -1, wk = -1, wv = -1;
    int w1 = -1, b1 = -1;  // post-attention feed-forward
    int w2 = -1, b2 = -1;  // output projection, zero-initialized
    int ln_gain = -1, ln_bias = -1;
    int tag_table = -1;  // 2 x d learned domain tags (0 = source, 1 = target)
};

inline Denoiser make_denoiser(ParamStore& store, const std::string& prefix, int d, uint64_t seed) {
    Denoiser dn;
    dn.d = d;
    dn.wq = store.add(prefix + ".wq", detail::init_xavier(seed, prefix + ".wq", d, d));
    dn.wk = store.add(prefix + ".wk", detail::init_xavier(seed, prefix + ".wk", d, d));
    dn.wv = store.add(prefix + ".wv", detail::init_xavier(seed, prefix + ".wv", d, d));
    dn.w1 = store.add(prefix + ".w1", detail::init_xavier(seed, prefix + ".w1", d, d));
    dn.b1 = store.add(prefix + ".b1", Mat(1, d));
    dn.w2 = store.add(prefix + ".w2", Mat(d, d));  // zero: identity step at init
    dn.b2 = store.add(prefix + ".b2", Mat(1, d));
    dn.ln_gain = store.add(prefix + ".ln_gain", detail::init_const(1, d, 1.0));
    dn.ln_bias = store.add(prefix + ".ln_bias", Mat(1, d));
    dn.tag_table = store.add(prefix + ".tag_table",
                             detail::init_normal(seed, prefix + ".tag_table", 2, d, 0.02));
    return dn;
}

// One denoising application f(x_t, cond, t) -> estimate one step closer
// to the clean representation. `cond` may be -1 (no conditioning token);
// `domain` selects the learned tag added to the noised-state token.
inline int denoise_step(Graph& g, const Denoiser& dn, int x, int cond, int t, int domain,
                        const DiffusionSchedule& sched, Mat* attn_out = nullptr) {
    if (t < 1 || t > sched.T) fail(strfmt("denoise_step: step %d outside [1,%d]", t, sched.T));
    if (domain != 0 && domain != 1) fail("denoise_step: domain must be 0 or 1");
    if (g.val(x).cols != dn.d) fail("denoise_step: width mismatch");

    const int cond_node = cond >= 0 ? cond : g.input(Mat(1, dn.d));
    const int t_e = g.input(sinusoidal_step_embedding(t, dn.d));
    const int token0 = g.add(x, g.gather(g.param(dn.tag_table), {domain}));
    const int tokens = g.stack3(token0, cond_node, t_e);
    const int normed = g.layernorm_rows(tokens, g.param(dn.ln_gain), g.param(dn.ln_bias));

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dn.d));
    const int q = g.matmul(normed, g.param(dn.wq));
    const int k = g.matmul(normed, g.param(dn.wk));
    const int v = g.matmul(normed, g.param(dn.wv));
    const int attn = g.softmax_rows(g.scale(g.matmul_nt(q, k), inv_sqrt_d), /*causal=*/false);
    if (attn_out) *attn_out = g.val(attn);
    const int ctx = g.row_of(g.matmul(attn, v), 0);

    const int f = g.relu(g.add_rowvec(g.matmul(ctx, g.param(dn.w1)), g.param(dn.b1)));
    return g.add(x, g.add_rowvec(g.matmul(f, g.param(dn.w2)), g.param(dn.b2)));
}

// Full deterministic reverse chain from step T down to 0.
inline int reverse_chain(Graph& g, const Denoiser& dn, int x_T, int cond, int domain,
                         const DiffusionSchedule& sched) {
    int x = x_T;
    for (int t = sched.T; t >= 1; --t) {
        x = denoise_step(g, dn, x, cond, t, domain, sched);
        if (!g.val(x).all_finite())
            fail(strfmt("reverse_chain: non-finite state at step %d", t));
    }
    return x;
}

// Plain-matrix chain with an injectable step function (used to verify the
// chain against substitute denoisers).
inline Mat reverse_chain(const Mat& x_T, const DiffusionSchedule& sched,
                         const std::function<Mat(const Mat&, int)>& step) {
    Mat x = x_T;
    for (int t = sched.T; t >= 1; --t) {
        x = step(x, t);
        if (!x.all_finite()) fail(strfmt("reverse_chain: non-finite state at step %d", t));
    }
    return x;
}

// Mean squared reconstruction error over a batch of representations.
inline double diffusion_loss(const std::vector<Mat>& clean, const std::vector<Mat>& estimate) {
    if (clean.size() != estimate.size() || clean.empty())
        fail("diffusion_loss: batch size mismatch or empty batch");
    double total = 0.0;
    for (size_t i = 0; i < clean.size(); ++i) {
        if (!clean[i].same_shape(estimate[i])) fail("diffusion_loss: shape mismatch");
        for (size_t j = 0; j < clean[i].size(); ++j) {
            const double d = clean[i].v[j] - estimate[i].v[j];
            total += d * d;
        }
    }
    return total / static_cast<double>(clean.size());
}

}  // namespace horizonrec
