#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ctxfront/model.hpp"

using namespace ctxfront;
using ad::Tensor;
using namespace ctxfront::nn;

namespace {

ArchConfig small_config() {
    ArchConfig c;
    c.d_model = 16;
    c.n_primary_blocks = 1;
    c.n_context_blocks = 1;
    c.n_cross_blocks = 1;
    c.ffn_multiplier = 2;
    c.n_heads = 2;
    c.conv_kernel = 3;
    c.dvec_dim = 8;
    c.n_mels = 12;
    return c;
}

Tensor<float> random_tensor(std::vector<int> shape, std::mt19937_64 &rng) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto &x : v) x = uni(rng);
    return Tensor<float>::from_values(std::move(shape), std::move(v));
}

} // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    FrontendModel model(small_config(), 42);
    const std::string dir = "test_ckpt_roundtrip";
    save_checkpoint(dir, model, 1234);

    int64_t step = -1;
    FrontendModel loaded = load_checkpoint(dir, &step);
    CHECK(step == 1234);
    CHECK(loaded.cfg.d_model == 16);

    auto a = model.named_parameters();
    auto b = loaded.named_parameters();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second.values() == b[i].second.values()); // bit-equal
    }

    // identical forward masks
    std::mt19937_64 rng(7);
    auto noisy = random_tensor({9, 12}, rng);
    auto ref = random_tensor({9, 12}, rng);
    auto ctx = random_tensor({15, 12}, rng);
    auto dvec = random_tensor({1, 8}, rng);
    auto m1 = model.forward(noisy, ref, ctx, dvec);
    auto m2 = loaded.forward(noisy, ref, ctx, dvec);
    CHECK(m1.values() == m2.values());

    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint detects manifest mismatches") {
    FrontendModel model(small_config(), 43);
    const std::string dir = "test_ckpt_errors";
    save_checkpoint(dir, model, 5);

    SUBCASE("missing manifest") {
        std::filesystem::remove(dir + "/manifest.json");
        CHECK_THROWS_AS(load_checkpoint(dir), std::runtime_error);
    }

    SUBCASE("truncated blob") {
        std::filesystem::resize_file(dir + "/params.bin", 16);
        CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("truncated"),
                             std::runtime_error);
    }

    std::filesystem::remove_all(dir);
}

TEST_CASE("aec-only checkpoints reconstruct the variant") {
    ArchConfig c = small_config();
    c.n_primary_blocks = 2;
    c.n_context_blocks = 0;
    c.n_cross_blocks = 0;
    FrontendModel model(c, 44);
    const std::string dir = "test_ckpt_aec";
    save_checkpoint(dir, model, 0);
    FrontendModel loaded = load_checkpoint(dir);
    CHECK(loaded.cross.empty());
    CHECK(loaded.primary.size() == 2);
    std::filesystem::remove_all(dir);
}
