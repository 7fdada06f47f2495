#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ctxfront/gradcheck.hpp"
#include "ctxfront/losses.hpp"
#include "ctxfront/model.hpp"

namespace ctxfront::ad {

// Named grad_check results for every exposed op and every composite block,
// all in 64-bit mode. Composite checks use eps = 1e-4 (deep compositions
// leave some attention parameters with ~1e-8 gradients, where 1e-5
// perturbations sit below the central-difference roundoff floor).
inline std::vector<std::pair<std::string, double>> gradcheck_suite() {
    std::vector<std::pair<std::string, double>> results;
    std::mt19937_64 rng(2024);

    auto rnd = [&rng](std::vector<int> shape, double lo, double hi, bool rg) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        std::uniform_real_distribution<double> uni(lo, hi);
        std::vector<double> v(n);
        for (auto &x : v) x = uni(rng);
        return Tensor<double>::from_values(std::move(shape), std::move(v), rg);
    };
    // Scalarization with fixed index-dependent weights. The closure handed to
    // grad_check runs many times; it must be a deterministic function of the
    // leaf values, so the weights cannot come from a shared rng.
    auto wsum = [](const Tensor<double> &x) {
        std::vector<double> w(x.numel());
        for (size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
        return reduce_sum(mul(x, Tensor<double>::from_values(x.shape(), std::move(w))));
    };

    const int t = 5, c = 6;
    auto x = rnd({t, c}, -2.0, 2.0, true);
    auto y = rnd({t, c}, -2.0, 2.0, true);
    auto v = rnd({c}, -1.0, 1.0, true);
    auto w = rnd({c, 4}, -1.0, 1.0, true);
    auto b = rnd({4}, -1.0, 1.0, true);
    auto gamma = rnd({c}, 0.5, 1.5, true);
    auto beta = rnd({c}, -0.5, 0.5, true);
    auto kernel = rnd({3, c}, -1.0, 1.0, true);
    auto kbias = rnd({c}, -0.5, 0.5, true);
    auto wide = rnd({t, 2 * c}, -2.0, 2.0, true);
    auto pos = rnd({t, c}, 0.5, 3.0, true);
    auto away = rnd({t, c}, 0.2, 2.0, true);

    results.emplace_back("add", grad_check([&] { return wsum(add(x, y)); }, {x, y}));
    results.emplace_back("sub", grad_check([&] { return wsum(sub(x, y)); }, {x, y}));
    results.emplace_back("mul", grad_check([&] { return wsum(mul(x, y)); }, {x, y}));
    results.emplace_back("scale", grad_check([&] { return wsum(scale(x, 1.3)); }, {x}));
    results.emplace_back("add_rows", grad_check([&] { return wsum(add_rows(x, v)); }, {x, v}));
    results.emplace_back("mul_rows", grad_check([&] { return wsum(mul_rows(x, v)); }, {x, v}));
    results.emplace_back("matmul", grad_check([&] { return wsum(matmul(x, w)); }, {x, w}));
    results.emplace_back("affine", grad_check([&] { return wsum(affine(x, w, b)); }, {x, w, b}));
    results.emplace_back("transpose", grad_check([&] { return wsum(transpose(x)); }, {x}));
    results.emplace_back("concat0", grad_check([&] { return wsum(concat(x, y, 0)); }, {x, y}));
    results.emplace_back("concat1", grad_check([&] { return wsum(concat(x, y, 1)); }, {x, y}));
    results.emplace_back("slice", grad_check([&] { return wsum(slice(x, 0, 1, t - 1)); }, {x}));
    results.emplace_back("reduce_sum", grad_check([&] { return reduce_sum(x); }, {x}));
    results.emplace_back("reduce_mean", grad_check([&] { return reduce_mean(x); }, {x}));
    results.emplace_back("sigmoid", grad_check([&] { return wsum(sigmoid(x)); }, {x}));
    results.emplace_back("swish", grad_check([&] { return wsum(swish(x)); }, {x}));
    results.emplace_back("relu", grad_check([&] { return wsum(relu(away)); }, {away}));
    results.emplace_back("abs", grad_check([&] { return wsum(abs(away)); }, {away}));
    results.emplace_back("softmax",
                         grad_check([&] { return wsum(softmax_rows(x, Tensor<double>())); }, {x}));
    results.emplace_back(
        "layer_norm", grad_check([&] { return wsum(layer_norm(x, gamma, beta)); }, {x, gamma, beta}));
    results.emplace_back("causal_depthwise_conv1d",
                         grad_check([&] { return wsum(causal_depthwise_conv1d(x, kernel, kbias)); },
                                    {x, kernel, kbias}));
    results.emplace_back("glu", grad_check([&] { return wsum(glu(wide)); }, {wide}));
    results.emplace_back("log_floor",
                         grad_check([&] { return wsum(log_floor(pos, 1e-10)); }, {pos}));
    results.emplace_back("frame_stack",
                         grad_check([&] { return wsum(frame_stack(x, 4, 3)); }, {x}));

    auto collect_leaves = [](nn::NamedParams<double> params, std::vector<Tensor<double>> extra) {
        for (auto &[name, p] : params) extra.push_back(p);
        return extra;
    };

    {
        nn::ConformerBlock<double> block(8, 2, 2, 3, 65, rng);
        auto bx = rnd({5, 8}, -1.0, 1.0, true);
        nn::NamedParams<double> params;
        block.collect("b", params);
        results.emplace_back("conformer_block",
                             grad_check([&] { return wsum(block(bx)); },
                                        collect_leaves(std::move(params), {bx}), 1e-4));
    }
    {
        nn::ModulatedConformerBlock<double> block(8, 6, 2, 2, 3, 65, rng);
        std::uniform_real_distribution<double> uni(-0.05, 0.05);
        for (auto &p : {&block.film.r.w, &block.film.r.b, &block.film.h.w, &block.film.h.b}) {
            for (auto &val : p->values()) val = uni(rng);
        }
        auto bx = rnd({5, 8}, -1.0, 1.0, true);
        auto m = rnd({1, 6}, -1.0, 1.0, true);
        nn::NamedParams<double> params;
        block.collect("mb", params);
        results.emplace_back("modulated_conformer_block",
                             grad_check([&] { return wsum(block(bx, m)); },
                                        collect_leaves(std::move(params), {bx, m}), 1e-4));
    }
    {
        nn::CrossAttentionConformerBlock<double> block(8, 6, 2, 2, 3, 65, rng);
        std::uniform_real_distribution<double> uni(-0.05, 0.05);
        for (auto &p : {&block.film_m.r.w, &block.film_m.r.b, &block.film_m.h.w, &block.film_m.h.b}) {
            for (auto &val : p->values()) val = uni(rng);
        }
        auto bx = rnd({4, 8}, -1.0, 1.0, true);
        auto m = rnd({1, 6}, -1.0, 1.0, true);
        auto n = rnd({3, 8}, -1.0, 1.0, true);
        nn::NamedParams<double> params;
        block.collect("cb", params);
        results.emplace_back("cross_attention_block",
                             grad_check([&] { return wsum(block(bx, m, n)); },
                                        collect_leaves(std::move(params), {bx, m, n}), 1e-4));
    }
    {
        nn::ArchConfig cfg;
        cfg.d_model = 8;
        cfg.n_primary_blocks = 1;
        cfg.n_context_blocks = 1;
        cfg.n_cross_blocks = 1;
        cfg.ffn_multiplier = 2;
        cfg.n_heads = 2;
        cfg.conv_kernel = 3;
        cfg.dvec_dim = 6;
        cfg.n_mels = 4;
        nn::FrontendModelT<double> model(cfg, 52);
        std::uniform_real_distribution<double> uni(-0.05, 0.05);
        for (auto &[name, p] : model.named_parameters()) {
            if (name.find("film") != std::string::npos) {
                for (auto &val : p.values()) val = uni(rng);
            }
        }
        auto noisy = rnd({4, 4}, -1.0, 1.0, true);
        auto ref = rnd({4, 4}, -1.0, 1.0, true);
        auto ctx = rnd({3, 4}, -1.0, 1.0, true);
        auto dvec = rnd({1, 6}, -1.0, 1.0, true);
        results.emplace_back(
            "frontend_forward",
            grad_check([&] { return wsum(model.forward(noisy, ref, ctx, dvec)); },
                       collect_leaves(model.named_parameters(), {noisy, ref, ctx, dvec}), 1e-4));
    }
    {
        // spectral + asr loss path: gradients reach the mask through the
        // training-mode enhancement and the frozen encoder.
        losses::FrozenEncoderT<double> enc;
        auto mel = rnd({5, 128}, 0.5, 2.0, false);
        auto mask = rnd({5, 128}, 0.3, 0.9, true);
        auto clean = rnd({5, 128}, -1.0, 1.0, false);
        // keep |mask - irm| away from the abs() kink
        auto irm = rnd({5, 128}, 0.05, 0.25, false);
        results.emplace_back(
            "loss_path", grad_check(
                             [&] {
                                 auto enhanced = losses::enhanced_lfbe_for_training(mel, mask);
                                 auto sl = losses::spectral_loss(mask, irm);
                                 return add(sl, losses::asr_loss(enhanced, clean, enc));
                             },
                             {mask}, 1e-4));
    }
    return results;
}

} // namespace ctxfront::ad
