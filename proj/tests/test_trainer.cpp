#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ctxfront/trainer.hpp"

using namespace ctxfront;
using ad::Tensor;
using namespace ctxfront::train;

namespace {

nn::ArchConfig tiny_arch() {
    nn::ArchConfig c;
    c.d_model = 32;
    c.n_primary_blocks = 1;
    c.n_context_blocks = 1;
    c.n_cross_blocks = 1;
    c.ffn_multiplier = 2;
    c.n_heads = 2;
    c.conv_kernel = 7;
    c.dvec_dim = 256;
    c.n_mels = 128;
    return c;
}

std::vector<UtteranceExample> tiny_dataset(int n, uint64_t seed) {
    DatasetSpec spec;
    spec.n_examples = n;
    spec.utterance_duration_s = 0.5;
    spec.snr_choices_db = {0.0, 5.0};
    spec.seed = seed;
    return generate_dataset(spec);
}

std::vector<char> slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
    std::mt19937_64 rng(1);
    nn::Dense<float> layer(4, 3, rng);
    nn::NamedParams<float> params;
    layer.collect("layer", params);
    const auto w_before = layer.w.values();

    for (auto &[name, p] : params) p.zero_grad();
    AdamState state;
    adam_step(params, state, 1e-3, 0.9, 0.999, 1e-8);
    CHECK(layer.w.values() == w_before);
    CHECK(state.t == 1);
}

TEST_CASE("first adam step moves by about -lr in the gradient direction") {
    auto p = Tensor<float>::from_values({1}, {2.0f}, true);
    nn::NamedParams<float> params = {{"p", p}};
    p.grad()[0] = 0.37f; // any nonzero scalar gradient
    AdamState state;
    adam_step(params, state, 1e-3, 0.9, 0.999, 1e-8);
    // bias-corrected m/sqrt(v) = g/|g| = 1 for the first step
    CHECK(p.values()[0] == doctest::Approx(2.0f - 1e-3).epsilon(1e-5));

    auto q = Tensor<float>::from_values({1}, {-1.0f}, true);
    nn::NamedParams<float> qparams = {{"q", q}};
    q.grad()[0] = -123.0f;
    AdamState qstate;
    adam_step(qparams, qstate, 1e-3, 0.9, 0.999, 1e-8);
    CHECK(q.values()[0] == doctest::Approx(-1.0f + 1e-3).epsilon(1e-5));
}

TEST_CASE("adam aborts on non-finite gradients with the step number") {
    auto p = Tensor<float>::from_values({1}, {1.0f}, true);
    nn::NamedParams<float> params = {{"p", p}};
    p.grad()[0] = std::numeric_limits<float>::quiet_NaN();
    AdamState state;
    CHECK_THROWS_WITH_AS(adam_step(params, state, 1e-3, 0.9, 0.999, 1e-8),
                         doctest::Contains("step 1"), std::runtime_error);
}

TEST_CASE("zero training steps produce only the initial checkpoint state") {
    nn::FrontendModel model(tiny_arch(), 11);
    auto dataset = tiny_dataset(2, 21);
    TrainConfig cfg;
    cfg.steps = 0;
    cfg.batch_size = 1;
    const std::string dir = "test_train_zero";
    TrainResult res = run_training(model, dataset, cfg, dir);
    CHECK(res.metrics.empty());

    // both written checkpoints hold the initial parameters
    int64_t step = -1;
    nn::FrontendModel init = nn::load_checkpoint(dir + "/step_0", &step);
    CHECK(step == 0);
    nn::FrontendModel fin = nn::load_checkpoint(dir + "/final", &step);
    CHECK(step == 0);
    CHECK(slurp(dir + "/step_0/params.bin") == slurp(dir + "/final/params.bin"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("training is deterministic: identical runs give identical checkpoints") {
    auto dataset = tiny_dataset(4, 31);
    TrainConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 2;
    cfg.seed = 5;
    cfg.ramp.spectral_only_steps = 1;
    cfg.ramp.ramp_steps = 2;

    nn::FrontendModel m1(tiny_arch(), 11);
    nn::FrontendModel m2(tiny_arch(), 11);
    TrainResult r1 = run_training(m1, dataset, cfg, "test_train_det1");
    TrainResult r2 = run_training(m2, dataset, cfg, "test_train_det2");

    REQUIRE(r1.metrics.size() == r2.metrics.size());
    for (size_t i = 0; i < r1.metrics.size(); ++i) {
        CHECK(r1.metrics[i].spectral_loss == r2.metrics[i].spectral_loss);
        CHECK(r1.metrics[i].asr_loss == r2.metrics[i].asr_loss);
        CHECK(r1.metrics[i].total_loss == r2.metrics[i].total_loss);
    }
    CHECK(slurp("test_train_det1/final/params.bin") == slurp("test_train_det2/final/params.bin"));
    std::filesystem::remove_all("test_train_det1");
    std::filesystem::remove_all("test_train_det2");
}

TEST_CASE("metrics are monotone in step and track the ramp") {
    nn::FrontendModel model(tiny_arch(), 12);
    auto dataset = tiny_dataset(3, 41);
    TrainConfig cfg;
    cfg.steps = 5;
    cfg.batch_size = 1;
    cfg.ramp.spectral_only_steps = 2;
    cfg.ramp.ramp_steps = 2;
    cfg.ramp.max_asr_weight = 1.0;
    TrainResult res = run_training(model, dataset, cfg);

    REQUIRE(res.metrics.size() == 5);
    for (size_t i = 0; i < res.metrics.size(); ++i) {
        CHECK(res.metrics[i].step == static_cast<int64_t>(i));
        if (i > 0) CHECK(res.metrics[i].step > res.metrics[i - 1].step);
    }
    CHECK(res.metrics[0].asr_weight == 0.0);
    CHECK(res.metrics[1].asr_weight == 0.0);
    CHECK(res.metrics[2].asr_weight == 0.0);
    CHECK(res.metrics[3].asr_weight == doctest::Approx(0.5));
    CHECK(res.metrics[4].asr_weight == 1.0);
    // asr loss is reported once the weight engages
    CHECK(res.metrics[0].asr_loss == 0.0);
    CHECK(res.metrics[4].asr_loss > 0.0);
    CHECK(res.frozen_encoder_hash_before == res.frozen_encoder_hash_after);
}

TEST_CASE("training rejects an empty dataset") {
    nn::FrontendModel model(tiny_arch(), 13);
    std::vector<UtteranceExample> empty;
    TrainConfig cfg;
    cfg.steps = 1;
    CHECK_THROWS_AS(run_training(model, empty, cfg), std::runtime_error);
}

TEST_CASE("a short run reduces the spectral loss on a pinned batch") {
    nn::FrontendModel model(tiny_arch(), 14);
    auto dataset = tiny_dataset(2, 51);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch_size = 2;
    cfg.learning_rate = 2e-3;
    cfg.ramp.spectral_only_steps = 1000; // spectral only
    TrainResult res = run_training(model, dataset, cfg);
    REQUIRE(res.metrics.size() == 30);
    CHECK(res.metrics.back().spectral_loss < res.metrics.front().spectral_loss);
}

TEST_CASE("held-out mask MAE is reported") {
    nn::FrontendModel model(tiny_arch(), 15);
    auto dataset = tiny_dataset(2, 61);
    auto heldout = tiny_dataset(2, 62);
    TrainConfig cfg;
    cfg.steps = 1;
    cfg.batch_size = 1;
    TrainResult res = run_training(model, dataset, cfg, "", &heldout);
    CHECK(std::isfinite(res.heldout_mask_mae));
    CHECK(res.heldout_mask_mae > 0.0);
    CHECK(res.heldout_mask_mae < 1.0);
}
