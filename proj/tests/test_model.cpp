#include <doctest.h>

#include <iostream>
#include <random>

#include "ctxfront/gradcheck.hpp"
#include "ctxfront/model.hpp"

using namespace ctxfront;
using ad::Tensor;
using namespace ctxfront::nn;

namespace {

ArchConfig desk_config() {
    ArchConfig c;
    c.d_model = 32;
    c.n_primary_blocks = 1;
    c.n_context_blocks = 1;
    c.n_cross_blocks = 1;
    c.ffn_multiplier = 2;
    c.n_heads = 2;
    c.conv_kernel = 7;
    c.dvec_dim = 16;
    c.n_mels = 24;
    return c;
}

template <typename Real>
Tensor<Real> random_tensor(std::vector<int> shape, std::mt19937_64 &rng, double lo = -2.0,
                           double hi = 2.0, bool requires_grad = false) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<Real> v(n);
    for (auto &x : v) x = static_cast<Real>(uni(rng));
    return Tensor<Real>::from_values(std::move(shape), std::move(v), requires_grad);
}

} // namespace

TEST_CASE("frontend mask has the right shape and open-interval range") {
    std::mt19937_64 rng(1);
    FrontendModelT<float> model(desk_config(), 99);
    auto noisy = random_tensor<float>({21, 24}, rng);
    auto ref = random_tensor<float>({21, 24}, rng);
    auto ctx = random_tensor<float>({40, 24}, rng);
    auto dvec = random_tensor<float>({1, 16}, rng);
    auto mask = model.forward(noisy, ref, ctx, dvec);
    CHECK(mask.shape() == std::vector<int>{21, 24});
    for (float v : mask.values()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("forward succeeds with all-zero reference and absent speaker") {
    std::mt19937_64 rng(2);
    FrontendModelT<float> model(desk_config(), 100);
    auto noisy = random_tensor<float>({15, 24}, rng);
    auto ref = Tensor<float>::zeros({15, 24});
    auto ctx = Tensor<float>::zeros({30, 24});
    auto dvec = Tensor<float>::zeros({1, 16});
    auto mask = model.forward(noisy, ref, ctx, dvec);
    CHECK(mask.shape() == std::vector<int>{15, 24});
    for (float v : mask.values()) CHECK(std::isfinite(v));
}

TEST_CASE("masks at initialization are invariant to the speaker embedding") {
    std::mt19937_64 rng(3);
    FrontendModelT<float> model(desk_config(), 101);
    auto noisy = random_tensor<float>({18, 24}, rng);
    auto ref = random_tensor<float>({18, 24}, rng);
    auto ctx = random_tensor<float>({25, 24}, rng);
    auto dvec = random_tensor<float>({1, 16}, rng);
    auto zero = Tensor<float>::zeros({1, 16});
    auto m1 = model.forward(noisy, ref, ctx, dvec);
    auto m2 = model.forward(noisy, ref, ctx, zero);
    CHECK(m1.values() == m2.values()); // bit-equal
}

TEST_CASE("frontend is causal in the noisy and reference streams") {
    std::mt19937_64 rng(4);
    FrontendModelT<float> model(desk_config(), 102);
    const int t_len = 19, t = 7;
    auto noisy = random_tensor<float>({t_len, 24}, rng);
    auto ref = random_tensor<float>({t_len, 24}, rng);
    auto ctx = random_tensor<float>({33, 24}, rng);
    auto dvec = random_tensor<float>({1, 16}, rng);
    auto m1 = model.forward(noisy, ref, ctx, dvec);

    auto noisy2 = Tensor<float>::from_values(noisy.shape(), noisy.values());
    auto ref2 = Tensor<float>::from_values(ref.shape(), ref.values());
    for (int r = t + 1; r < t_len; ++r) {
        for (int c = 0; c < 24; ++c) {
            noisy2.values()[static_cast<size_t>(r) * 24 + c] += 5.0f;
            ref2.values()[static_cast<size_t>(r) * 24 + c] -= 4.0f;
        }
    }
    auto m2 = model.forward(noisy2, ref2, ctx, dvec);
    for (int r = 0; r <= t; ++r) {
        for (int c = 0; c < 24; ++c) {
            CHECK(std::fabs(m1.at(r, c) - m2.at(r, c)) < 1e-6f);
        }
    }
}

TEST_CASE("context reaches every output frame") {
    std::mt19937_64 rng(5);
    FrontendModelT<float> model(desk_config(), 103);
    auto noisy = random_tensor<float>({12, 24}, rng);
    auto ref = random_tensor<float>({12, 24}, rng);
    auto ctx = random_tensor<float>({20, 24}, rng);
    auto dvec = random_tensor<float>({1, 16}, rng);
    auto m1 = model.forward(noisy, ref, ctx, dvec);
    auto ctx2 = Tensor<float>::from_values(ctx.shape(), ctx.values());
    for (auto &v : ctx2.values()) v += 1.5f;
    auto m2 = model.forward(noisy, ref, ctx2, dvec);
    double diff0 = 0.0;
    for (int c = 0; c < 24; ++c) diff0 += std::fabs(m1.at(0, c) - m2.at(0, c));
    CHECK(diff0 > 1e-7); // static side input may influence frame 0
}

TEST_CASE("aec-only variant skips the context encoders") {
    ArchConfig c = desk_config();
    c.n_primary_blocks = 3;
    c.n_context_blocks = 0;
    c.n_cross_blocks = 0;
    FrontendModelT<float> model(c, 104);
    CHECK(model.context.empty());
    CHECK(model.cross.empty());

    std::mt19937_64 rng(6);
    auto noisy = random_tensor<float>({10, 24}, rng);
    auto ref = random_tensor<float>({10, 24}, rng);
    auto ctx = Tensor<float>::zeros({5, 24}); // ignored
    auto dvec = Tensor<float>::zeros({1, 16});
    auto mask = model.forward(noisy, ref, ctx, dvec);
    CHECK(mask.shape() == std::vector<int>{10, 24});

    // paper-scale AEC-only settings
    ArchConfig aec = ArchConfig::aec_only();
    CHECK(aec.n_primary_blocks == 6);
    CHECK(aec.ffn_multiplier == 8);
    CHECK(aec.n_context_blocks == 0);
}

TEST_CASE("shape violations are rejected") {
    std::mt19937_64 rng(7);
    FrontendModelT<float> model(desk_config(), 105);
    auto noisy = random_tensor<float>({10, 24}, rng);
    auto bad_ref = random_tensor<float>({11, 24}, rng);
    auto ctx = random_tensor<float>({20, 24}, rng);
    auto dvec = Tensor<float>::zeros({1, 16});
    CHECK_THROWS_AS(model.forward(noisy, bad_ref, ctx, dvec), std::runtime_error);
    auto bad_dvec = Tensor<float>::zeros({1, 8});
    CHECK_THROWS_AS(model.forward(noisy, noisy, ctx, bad_dvec), std::runtime_error);
    ArchConfig bad = desk_config();
    bad.d_model = 30; // not divisible by heads
    bad.n_heads = 4;
    CHECK_THROWS_AS(FrontendModelT<float>(bad, 1), std::runtime_error);
}

TEST_CASE("full frontend passes grad_check on a tiny instance") {
    ArchConfig c;
    c.d_model = 8;
    c.n_primary_blocks = 1;
    c.n_context_blocks = 1;
    c.n_cross_blocks = 1;
    c.ffn_multiplier = 2;
    c.n_heads = 2;
    c.conv_kernel = 3;
    c.dvec_dim = 6;
    c.n_mels = 4;
    FrontendModelT<double> model(c, 106);
    // Move FiLM affines off zero so speaker-path gradients are live.
    std::mt19937_64 frng(8);
    std::uniform_real_distribution<double> uni(-0.05, 0.05);
    for (auto &[name, p] : model.named_parameters()) {
        if (name.find("film") != std::string::npos) {
            for (auto &v : p.values()) v = uni(frng);
        }
    }

    std::mt19937_64 rng(9);
    auto noisy = random_tensor<double>({4, 4}, rng, -1.0, 1.0, true);
    auto ref = random_tensor<double>({4, 4}, rng, -1.0, 1.0, true);
    auto ctx = random_tensor<double>({3, 4}, rng, -1.0, 1.0, true);
    auto dvec = random_tensor<double>({1, 6}, rng, -1.0, 1.0, true);

    std::vector<Tensor<double>> leaves = {noisy, ref, ctx, dvec};
    for (auto &[name, p] : model.named_parameters()) leaves.push_back(p);

    std::mt19937_64 wrng(10);
    std::vector<double> w(4 * 4);
    for (auto &v : w) v = uni(wrng) * 20.0;
    auto weights = Tensor<double>::from_values({4, 4}, std::move(w));

    // eps = 1e-4 here: a few attention parameters have genuinely tiny
    // gradients (~1e-8) on this tiny instance, and central-difference
    // roundoff at eps = 1e-5 would swamp them while truncation error at
    // 1e-4 stays orders below the tolerance.
    const double err = ad::grad_check(
        [&] { return ad::reduce_sum(ad::mul(model.forward(noisy, ref, ctx, dvec), weights)); },
        leaves, 1e-4);
    CHECK(err < 1e-4);
}

TEST_CASE("paper-scale configuration lands near 15M parameters") {
    FrontendModelT<float> model(ArchConfig{}, 107);
    const size_t count = model.parameter_count();
    // Logged sanity bound, not a contract: ~15M at the default settings.
    std::cout << "[info] paper-config parameter count: " << count << "\n";
    CHECK(count > 10'000'000);
    CHECK(count < 20'000'000);

    // 2 x 128 stacked channels equal d_model, so the input projection is the
    // identity at this configuration; run a short forward through that path.
    CHECK_FALSE(model.has_input_proj);
    std::mt19937_64 rng(12);
    auto noisy = random_tensor<float>({6, 128}, rng);
    auto ref = random_tensor<float>({6, 128}, rng);
    auto ctx = random_tensor<float>({8, 128}, rng);
    auto dvec = random_tensor<float>({1, 256}, rng);
    auto mask = model.forward(noisy, ref, ctx, dvec);
    CHECK(mask.shape() == std::vector<int>{6, 128});
    for (float v : mask.values()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("forward is deterministic") {
    std::mt19937_64 rng(11);
    FrontendModelT<float> model(desk_config(), 108);
    auto noisy = random_tensor<float>({9, 24}, rng);
    auto ref = random_tensor<float>({9, 24}, rng);
    auto ctx = random_tensor<float>({14, 24}, rng);
    auto dvec = random_tensor<float>({1, 16}, rng);
    auto m1 = model.forward(noisy, ref, ctx, dvec);
    auto m2 = model.forward(noisy, ref, ctx, dvec);
    CHECK(m1.values() == m2.values());
}
