#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ctxfront/tensor.hpp"

namespace ctxfront::nn {

using ad::Tensor;

template <typename Real>
using NamedParams = std::vector<std::pair<std::string, Tensor<Real>>>;

// Scaled uniform fan-in init: U[-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename Real>
Tensor<Real> init_uniform(std::vector<int> shape, int fan_in, std::mt19937_64 &rng) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    std::uniform_real_distribution<double> uni(-bound, bound);
    std::vector<Real> v(n);
    for (auto &x : v) x = static_cast<Real>(uni(rng));
    return Tensor<Real>::from_values(std::move(shape), std::move(v), true);
}

template <typename Real>
struct Dense {
    Tensor<Real> w, b; // b undefined for bias-free layers

    Dense() = default;
    Dense(int in, int out, std::mt19937_64 &rng, bool with_bias = true)
        : w(init_uniform<Real>({in, out}, in, rng)) {
        if (with_bias) b = init_uniform<Real>({out}, in, rng);
    }

    static Dense zero_init(int in, int out) {
        Dense d;
        d.w = Tensor<Real>::zeros({in, out}, true);
        d.b = Tensor<Real>::zeros({out}, true);
        return d;
    }

    Tensor<Real> operator()(const Tensor<Real> &x) const {
        return b.defined() ? ad::affine(x, w, b) : ad::matmul(x, w);
    }

    void collect(const std::string &prefix, NamedParams<Real> &out) {
        out.emplace_back(prefix + ".w", w);
        if (b.defined()) out.emplace_back(prefix + ".b", b);
    }
};

template <typename Real>
struct LayerNorm {
    Tensor<Real> gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int dim)
        : gamma(Tensor<Real>::filled({dim}, Real(1), true)),
          beta(Tensor<Real>::zeros({dim}, true)) {}

    Tensor<Real> operator()(const Tensor<Real> &x) const {
        return ad::layer_norm(x, gamma, beta);
    }

    void collect(const std::string &prefix, NamedParams<Real> &out) {
        out.emplace_back(prefix + ".gamma", gamma);
        out.emplace_back(prefix + ".beta", beta);
    }
};

// LN -> dense(d -> mult*d) -> swish -> dense(mult*d -> d). Callers add the
// half residual: x + 0.5 * ffn(x).
template <typename Real>
struct FeedForward {
    LayerNorm<Real> ln;
    Dense<Real> in, out;

    FeedForward() = default;
    FeedForward(int dim, int mult, std::mt19937_64 &rng)
        : ln(dim), in(dim, mult * dim, rng), out(mult * dim, dim, rng) {}

    Tensor<Real> operator()(const Tensor<Real> &x) const {
        return out(ad::swish(in(ln(x))));
    }

    void collect(const std::string &prefix, NamedParams<Real> &o) {
        ln.collect(prefix + ".ln", o);
        in.collect(prefix + ".in", o);
        out.collect(prefix + ".out", o);
    }
};

// Conformer convolution module: LN -> pointwise(d -> 2d) -> GLU -> causal
// depthwise conv(K) -> LN -> swish -> pointwise(d -> d). Layer norm in place
// of batch norm keeps the module streaming-deterministic.
template <typename Real>
struct ConvModule {
    LayerNorm<Real> ln_pre, ln_mid;
    Dense<Real> pw1, pw2;
    Tensor<Real> dw_kernel, dw_bias; // [K x d], [d]

    ConvModule() = default;
    ConvModule(int dim, int kernel, std::mt19937_64 &rng)
        : ln_pre(dim), ln_mid(dim), pw1(dim, 2 * dim, rng), pw2(dim, dim, rng),
          dw_kernel(init_uniform<Real>({kernel, dim}, kernel, rng)),
          dw_bias(init_uniform<Real>({dim}, kernel, rng)) {}

    Tensor<Real> operator()(const Tensor<Real> &x) const {
        Tensor<Real> h = ad::glu(pw1(ln_pre(x)));
        h = ad::causal_depthwise_conv1d(h, dw_kernel, dw_bias);
        return pw2(ad::swish(ln_mid(h)));
    }

    void collect(const std::string &prefix, NamedParams<Real> &o) {
        ln_pre.collect(prefix + ".ln_pre", o);
        pw1.collect(prefix + ".pw1", o);
        o.emplace_back(prefix + ".dw_kernel", dw_kernel);
        o.emplace_back(prefix + ".dw_bias", dw_bias);
        ln_mid.collect(prefix + ".ln_mid", o);
        pw2.collect(prefix + ".pw2", o);
    }
};

// Additive attention mask [T x S]: 0 inside the window, -1e9 outside. With
// window_past = w, query t sees keys [t - (w-1) .. t] (self included). The
// -1e9 offset underflows exp() to exact zero, so masked keys contribute
// nothing even bitwise.
template <typename Real>
Tensor<Real> causal_window_mask(int t_len, int window_past) {
    std::vector<Real> m(static_cast<size_t>(t_len) * t_len, Real(-1e9));
    for (int t = 0; t < t_len; ++t) {
        const int lo = std::max(0, t - (window_past - 1));
        for (int s = lo; s <= t; ++s) m[static_cast<size_t>(t) * t_len + s] = Real(0);
    }
    return Tensor<Real>::from_values({t_len, t_len}, std::move(m));
}

// Multi-head attention. Queries come from `query`, keys/values from `kv`.
// Pass a mask for causal windowed self-attention (or any time-aligned kv);
// leave it undefined when kv is wholly in the past (noise context).
template <typename Real>
struct MultiHeadAttention {
    Dense<Real> q_proj, k_proj, v_proj, o_proj;
    int n_heads = 1;
    int d_model = 0;

    MultiHeadAttention() = default;
    MultiHeadAttention(int dim, int heads, std::mt19937_64 &rng)
        // Key projection carries no bias: softmax is invariant to a constant
        // shift per query row, so a key bias would be a dead parameter.
        : q_proj(dim, dim, rng), k_proj(dim, dim, rng, /*with_bias=*/false),
          v_proj(dim, dim, rng), o_proj(dim, dim, rng), n_heads(heads), d_model(dim) {
        if (dim % heads != 0) {
            throw std::runtime_error("attention: d_model not divisible by n_heads");
        }
    }

    Tensor<Real> operator()(const Tensor<Real> &query, const Tensor<Real> &kv,
                            const Tensor<Real> &mask = {}) const {
        if (kv.rows() == 0) throw std::runtime_error("attention: empty auxiliary sequence");
        const int dh = d_model / n_heads;
        const Real att_scale = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
        Tensor<Real> q = q_proj(query), k = k_proj(kv), v = v_proj(kv);
        std::vector<Tensor<Real>> heads;
        heads.reserve(n_heads);
        for (int h = 0; h < n_heads; ++h) {
            Tensor<Real> qh = ad::slice(q, 1, h * dh, dh);
            Tensor<Real> kh = ad::slice(k, 1, h * dh, dh);
            Tensor<Real> vh = ad::slice(v, 1, h * dh, dh);
            Tensor<Real> scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), att_scale);
            Tensor<Real> attn = ad::softmax_rows(scores, mask);
            heads.push_back(ad::matmul(attn, vh));
        }
        return o_proj(ad::concat(heads, 1));
    }

    void collect(const std::string &prefix, NamedParams<Real> &o) {
        q_proj.collect(prefix + ".q", o);
        k_proj.collect(prefix + ".k", o);
        v_proj.collect(prefix + ".v", o);
        o_proj.collect(prefix + ".o", o);
    }
};

// Feature-wise linear modulation with residual: x + r(m) (.) x + h(m). The
// affines are zero-initialized (weights and biases) so any m, including the
// absent-speaker zero vector, leaves x unchanged at initialization.
template <typename Real>
struct Film {
    Dense<Real> r, h;

    Film() = default;
    Film(int dvec_dim, int dim)
        : r(Dense<Real>::zero_init(dvec_dim, dim)), h(Dense<Real>::zero_init(dvec_dim, dim)) {}

    Tensor<Real> operator()(const Tensor<Real> &x, const Tensor<Real> &m) const {
        Tensor<Real> rm = r(m); // [1 x d]
        Tensor<Real> hm = h(m);
        return ad::add_rows(ad::add(x, ad::mul_rows(x, rm)), hm);
    }

    void collect(const std::string &prefix, NamedParams<Real> &o) {
        r.collect(prefix + ".r", o);
        h.collect(prefix + ".h", o);
    }
};

// Standard conformer block:
//   x'   = x  + 1/2 FFN(x)
//   x''  = x' + Conv(x')
//   x''' = x'' + MHSA(x'')   (causal, windowed)
//   y    = LayerNorm(x''' + 1/2 FFN(x'''))
template <typename Real>
struct ConformerBlock {
    FeedForward<Real> ffn1, ffn2;
    ConvModule<Real> conv;
    MultiHeadAttention<Real> mhsa;
    LayerNorm<Real> final_ln;
    int window_past = 65;

    ConformerBlock() = default;
    ConformerBlock(int dim, int mult, int heads, int kernel, int window, std::mt19937_64 &rng)
        : ffn1(dim, mult, rng), ffn2(dim, mult, rng), conv(dim, kernel, rng),
          mhsa(dim, heads, rng), final_ln(dim), window_past(window) {}

    Tensor<Real> operator()(const Tensor<Real> &x) const {
        Tensor<Real> mask = causal_window_mask<Real>(x.rows(), window_past);
        Tensor<Real> x1 = ad::add(x, ad::scale(ffn1(x), Real(0.5)));
        Tensor<Real> x2 = ad::add(x1, conv(x1));
        Tensor<Real> x3 = ad::add(x2, mhsa(x2, x2, mask));
        return final_ln(ad::add(x3, ad::scale(ffn2(x3), Real(0.5))));
    }

    void collect(const std::string &prefix, NamedParams<Real> &o) {
        ffn1.collect(prefix + ".ffn1", o);
        conv.collect(prefix + ".conv", o);
        mhsa.collect(prefix + ".mhsa", o);
        ffn2.collect(prefix + ".ffn2", o);
        final_ln.collect(prefix + ".final_ln", o);
    }
};

// FiLM by the speaker embedding, then the standard conformer sequence.
template <typename Real>
struct ModulatedConformerBlock {
    Film<Real> film;
    ConformerBlock<Real> block;

    ModulatedConformerBlock() = default;
    ModulatedConformerBlock(int dim, int dvec_dim, int mult, int heads, int kernel, int window,
                            std::mt19937_64 &rng)
        : film(dvec_dim, dim), block(dim, mult, heads, kernel, window, rng) {}

    Tensor<Real> operator()(const Tensor<Real> &x, const Tensor<Real> &m) const {
        return block(film(x, m));
    }

    void collect(const std::string &prefix, NamedParams<Real> &o) {
        film.collect(prefix + ".film", o);
        block.collect(prefix + ".block", o);
    }
};

// Modulated cross-attention conformer block:
//   xh   = x + r(m) (.) x + h(m)
//   xt   = xh + 1/2 FFN(xh),    nt = n + 1/2 FFN(n)
//   x'   = xt + Conv(xt),       n' = nt + Conv(nt)
//   x''  = x' + MHCA(x', n')            (context fully visible)
//   x''' = x' (.) r(x'') + h(x'')       (frame-wise affines, no residual)
//   x'''' = x' + MHCA(x', x''')         (causal window: x''' is time-aligned
//                                        with the input stream)
//   y    = LayerNorm(x'''' + 1/2 FFN(x''''))
template <typename Real>
struct CrossAttentionConformerBlock {
    Film<Real> film_m;
    FeedForward<Real> ffn_x, ffn_n, ffn_final;
    ConvModule<Real> conv_x, conv_n;
    MultiHeadAttention<Real> mhca_ctx, mhca_merge;
    Dense<Real> fw_r, fw_h; // frame-wise FiLM on x'', separate from film_m
    LayerNorm<Real> final_ln;
    int window_past = 65;

    CrossAttentionConformerBlock() = default;
    CrossAttentionConformerBlock(int dim, int dvec_dim, int mult, int heads, int kernel,
                                 int window, std::mt19937_64 &rng)
        : film_m(dvec_dim, dim), ffn_x(dim, mult, rng), ffn_n(dim, mult, rng),
          ffn_final(dim, mult, rng), conv_x(dim, kernel, rng), conv_n(dim, kernel, rng),
          mhca_ctx(dim, heads, rng), mhca_merge(dim, heads, rng), fw_r(dim, dim, rng),
          fw_h(dim, dim, rng), final_ln(dim), window_past(window) {}

    Tensor<Real> operator()(const Tensor<Real> &x, const Tensor<Real> &m,
                            const Tensor<Real> &n) const {
        Tensor<Real> xh = film_m(x, m);
        Tensor<Real> xt = ad::add(xh, ad::scale(ffn_x(xh), Real(0.5)));
        Tensor<Real> nt = ad::add(n, ad::scale(ffn_n(n), Real(0.5)));
        Tensor<Real> xp = ad::add(xt, conv_x(xt));
        Tensor<Real> np = ad::add(nt, conv_n(nt));
        Tensor<Real> x2 = ad::add(xp, mhca_ctx(xp, np));
        Tensor<Real> x3 = ad::add(ad::mul(xp, fw_r(x2)), fw_h(x2));
        Tensor<Real> mask = causal_window_mask<Real>(x.rows(), window_past);
        Tensor<Real> x4 = ad::add(xp, mhca_merge(xp, x3, mask));
        return final_ln(ad::add(x4, ad::scale(ffn_final(x4), Real(0.5))));
    }

    void collect(const std::string &prefix, NamedParams<Real> &o) {
        film_m.collect(prefix + ".film_m", o);
        ffn_x.collect(prefix + ".ffn_x", o);
        ffn_n.collect(prefix + ".ffn_n", o);
        conv_x.collect(prefix + ".conv_x", o);
        conv_n.collect(prefix + ".conv_n", o);
        mhca_ctx.collect(prefix + ".mhca_ctx", o);
        fw_r.collect(prefix + ".fw_r", o);
        fw_h.collect(prefix + ".fw_h", o);
        mhca_merge.collect(prefix + ".mhca_merge", o);
        ffn_final.collect(prefix + ".ffn_final", o);
        final_ln.collect(prefix + ".final_ln", o);
    }
};

} // namespace ctxfront::nn
