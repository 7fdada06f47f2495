#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxfront/layers.hpp"

namespace ctxfront::nn {

struct ArchConfig {
    int d_model = 256;
    int n_primary_blocks = 2;
    int n_context_blocks = 2;
    int n_cross_blocks = 2;
    int ffn_multiplier = 6; // 8 for the AEC-only variant
    int n_heads = 4;
    int attn_window_past = 65;
    int conv_kernel = 15;
    int dvec_dim = 256;
    int n_mels = 128;

    // AEC-only variant: 6 modulated primary blocks, no context or
    // cross-attention encoders, multiplier 8.
    static ArchConfig aec_only() {
        ArchConfig c;
        c.n_primary_blocks = 6;
        c.n_context_blocks = 0;
        c.n_cross_blocks = 0;
        c.ffn_multiplier = 8;
        return c;
    }

    void validate() const {
        if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
            throw std::runtime_error("arch: d_model must be positive and divisible by n_heads");
        }
        if (attn_window_past < 1) throw std::runtime_error("arch: attn_window_past must be >= 1");
        if (n_primary_blocks < 1) throw std::runtime_error("arch: need at least one primary block");
        if (n_mels < 1 || dvec_dim < 1 || ffn_multiplier < 1 || conv_kernel < 1) {
            throw std::runtime_error("arch: dimensions must be positive");
        }
    }
};

// Primary encoder (modulated conformer blocks over stacked noisy+reference
// features), noise-context encoder (plain conformer blocks), cross-attention
// encoder, and a frame-wise sigmoid projection decoder.
template <typename Real>
struct FrontendModelT {
    ArchConfig cfg;
    bool has_input_proj = false;
    Dense<Real> input_proj; // 2*n_mels -> d_model when they differ
    Dense<Real> ctx_proj;   // n_mels -> d_model
    std::vector<ModulatedConformerBlock<Real>> primary;
    std::vector<ConformerBlock<Real>> context;
    std::vector<CrossAttentionConformerBlock<Real>> cross;
    Dense<Real> decoder; // d_model -> n_mels, sigmoid applied in forward

    FrontendModelT() = default;

    FrontendModelT(const ArchConfig &arch, uint64_t seed) : cfg(arch) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        if (2 * cfg.n_mels != cfg.d_model) {
            has_input_proj = true;
            input_proj = Dense<Real>(2 * cfg.n_mels, cfg.d_model, rng);
        }
        for (int i = 0; i < cfg.n_primary_blocks; ++i) {
            primary.emplace_back(cfg.d_model, cfg.dvec_dim, cfg.ffn_multiplier, cfg.n_heads,
                                 cfg.conv_kernel, cfg.attn_window_past, rng);
        }
        if (cfg.n_cross_blocks > 0) {
            ctx_proj = Dense<Real>(cfg.n_mels, cfg.d_model, rng);
            for (int i = 0; i < cfg.n_context_blocks; ++i) {
                context.emplace_back(cfg.d_model, cfg.ffn_multiplier, cfg.n_heads,
                                     cfg.conv_kernel, cfg.attn_window_past, rng);
            }
            for (int i = 0; i < cfg.n_cross_blocks; ++i) {
                cross.emplace_back(cfg.d_model, cfg.dvec_dim, cfg.ffn_multiplier, cfg.n_heads,
                                   cfg.conv_kernel, cfg.attn_window_past, rng);
            }
        }
        decoder = Dense<Real>(cfg.d_model, cfg.n_mels, rng);
    }

    // noisy/reference [T x n_mels], ctx [S x n_mels], dvec [1 x dvec_dim]
    // (zero vector = absent speaker). Returns the mask [T x n_mels], values
    // in (0, 1).
    Tensor<Real> forward(const Tensor<Real> &noisy, const Tensor<Real> &reference,
                         const Tensor<Real> &ctx, const Tensor<Real> &dvec) const {
        if (noisy.shape() != reference.shape()) {
            throw std::runtime_error("frontend: noisy/reference shape mismatch");
        }
        if (noisy.cols() != cfg.n_mels) {
            throw std::runtime_error("frontend: expected " + std::to_string(cfg.n_mels) +
                                     " feature channels, got " + std::to_string(noisy.cols()));
        }
        if (static_cast<int>(dvec.numel()) != cfg.dvec_dim) {
            throw std::runtime_error("frontend: speaker embedding dim mismatch");
        }
        Tensor<Real> x = ad::concat(noisy, reference, 1);
        if (has_input_proj) x = input_proj(x);
        for (const auto &block : primary) x = block(x, dvec);

        if (!cross.empty()) {
            if (ctx.cols() != cfg.n_mels) {
                throw std::runtime_error("frontend: context channel mismatch");
            }
            Tensor<Real> n = ctx_proj(ctx);
            for (const auto &block : context) n = block(n);
            for (const auto &block : cross) x = block(x, dvec, n);
        }
        return ad::sigmoid(decoder(x));
    }

    NamedParams<Real> named_parameters() {
        NamedParams<Real> out;
        if (has_input_proj) input_proj.collect("input_proj", out);
        for (size_t i = 0; i < primary.size(); ++i) {
            primary[i].collect("primary." + std::to_string(i), out);
        }
        if (!cross.empty()) {
            ctx_proj.collect("ctx_proj", out);
            for (size_t i = 0; i < context.size(); ++i) {
                context[i].collect("context." + std::to_string(i), out);
            }
            for (size_t i = 0; i < cross.size(); ++i) {
                cross[i].collect("cross." + std::to_string(i), out);
            }
        }
        decoder.collect("decoder", out);
        return out;
    }

    size_t parameter_count() {
        size_t n = 0;
        for (auto &[name, p] : named_parameters()) n += p.numel();
        return n;
    }
};

using FrontendModel = FrontendModelT<float>;

// Checkpoint directory: manifest.json (arch, step, named parameter list with
// shapes and offsets) + params.bin (raw float32 little-endian blobs).
// Round trip is bit-exact.
void save_checkpoint(const std::string &dir, FrontendModel &model, int64_t step);
FrontendModel load_checkpoint(const std::string &dir, int64_t *step_out = nullptr);

} // namespace ctxfront::nn
