#include <doctest.h>

#include <random>

#include "ctxfront/gradcheck.hpp"
#include "ctxfront/tensor.hpp"

using namespace ctxfront;
using ad::Tensor;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, std::mt19937_64 &rng, double lo = -2.0,
                             double hi = 2.0, bool requires_grad = true) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<double> v(n);
    for (auto &x : v) x = uni(rng);
    return Tensor<double>::from_values(std::move(shape), std::move(v), requires_grad);
}

// Scalarize with fixed random weights so every output entry influences the
// loss with a distinct sensitivity.
Tensor<double> weighted_sum(const Tensor<double> &x, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<double> w(x.numel());
    for (auto &v : w) v = uni(rng);
    Tensor<double> weights = Tensor<double>::from_values(x.shape(), std::move(w));
    return ad::reduce_sum(ad::mul(x, weights));
}

} // namespace

TEST_CASE("sigmoid(0) = 0.5") {
    auto x = Tensor<float>::zeros({3});
    auto y = ad::sigmoid(x);
    for (float v : y.values()) CHECK(v == 0.5f);
}

TEST_CASE("gradient of mean(x*x) is 2x/n") {
    auto x = Tensor<double>::from_values({2}, {1.0, 2.0}, true);
    auto loss = ad::reduce_mean(ad::mul(x, x));
    ad::backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(1.0)); // 2*1/2
    CHECK(x.grad()[1] == doctest::Approx(2.0)); // 2*2/2

    const double err = ad::grad_check(
        [&] { return ad::reduce_mean(ad::mul(x, x)); }, {x});
    CHECK(err < 1e-9);
}

TEST_CASE("backward of sum gives unit gradients") {
    auto x = Tensor<float>::from_values({3}, {5.0f, -1.0f, 2.0f}, true);
    ad::backward(ad::reduce_sum(x));
    for (float g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("unused leaf keeps zero gradient") {
    auto x = Tensor<float>::from_values({2}, {1.0f, 2.0f}, true);
    auto unused = Tensor<float>::from_values({2}, {3.0f, 4.0f}, true);
    ad::backward(ad::reduce_sum(x));
    unused.grad(); // allocate
    for (float g : unused.grad()) CHECK(g == 0.0f);
}

TEST_CASE("two paths to the same leaf accumulate") {
    auto x = Tensor<float>::from_values({2}, {3.0f, -1.0f}, true);
    // loss = sum(x + x) -> dx = 2
    ad::backward(ad::reduce_sum(ad::add(x, x)));
    for (float g : x.grad()) CHECK(g == 2.0f);
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = Tensor<float>::from_values({2}, {1.0f, 2.0f}, true);
    CHECK_THROWS_AS(ad::backward(ad::add(x, x)), std::runtime_error);
}

TEST_CASE("shape mismatches name the op") {
    auto a = Tensor<float>::zeros({2, 3});
    auto b = Tensor<float>::zeros({3, 2});
    CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("add"), std::runtime_error);
    CHECK_THROWS_WITH_AS(ad::mul(a, b), doctest::Contains("mul"), std::runtime_error);
    CHECK_THROWS_WITH_AS(ad::matmul(a, a), doctest::Contains("matmul"), std::runtime_error);
    CHECK_THROWS_WITH_AS(ad::affine(a, b, b), doctest::Contains("affine"), std::runtime_error);
}

TEST_CASE("softmax rejects a fully masked row") {
    auto s = Tensor<float>::zeros({2, 3});
    std::vector<float> m(6, 0.0f);
    m[3] = m[4] = m[5] = -1e9f;
    auto mask = Tensor<float>::from_values({2, 3}, std::move(m));
    CHECK_THROWS_WITH_AS(ad::softmax_rows(s, mask), doctest::Contains("fully masked"),
                         std::runtime_error);
}

TEST_CASE("masked softmax zeroes masked weights exactly") {
    auto s = Tensor<float>::from_values({1, 4}, {0.3f, -0.2f, 5.0f, 1.0f});
    std::vector<float> m = {0.0f, 0.0f, -1e9f, -1e9f};
    auto mask = Tensor<float>::from_values({1, 4}, std::move(m));
    auto y = ad::softmax_rows(s, mask);
    CHECK(y.values()[2] == 0.0f);
    CHECK(y.values()[3] == 0.0f);
    CHECK(y.values()[0] + y.values()[1] == doctest::Approx(1.0f));
}

TEST_CASE("forward determinism") {
    std::mt19937_64 rng(11);
    auto x = random_tensor({7, 5}, rng);
    auto w = random_tensor({5, 4}, rng);
    auto run = [&] {
        return ad::swish(ad::matmul(x, w)).values();
    };
    CHECK(run() == run());
}

TEST_CASE("grad_check passes for every op at random shapes") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 3; ++trial) {
        const int t = 2 + static_cast<int>(rng() % 4);
        const int c = 2 + static_cast<int>(rng() % 4);

        auto x = random_tensor({t, c}, rng);
        auto y = random_tensor({t, c}, rng);
        auto v = random_tensor({c}, rng);

        CHECK(ad::grad_check([&] { return weighted_sum(ad::add(x, y), 1); }, {x, y}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::sub(x, y), 2); }, {x, y}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::mul(x, y), 3); }, {x, y}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::scale(x, 1.7), 4); }, {x}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::add_rows(x, v), 5); }, {x, v}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::mul_rows(x, v), 6); }, {x, v}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::transpose(x), 7); }, {x}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::sigmoid(x), 8); }, {x}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::swish(x), 9); }, {x}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::concat(x, y, 0), 10); }, {x, y}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::concat(x, y, 1), 11); }, {x, y}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::slice(x, 0, 1, t - 1), 12); }, {x}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::slice(x, 1, 1, c - 1), 13); }, {x}) < 1e-6);
        CHECK(ad::grad_check([&] { return ad::reduce_mean(x); }, {x}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::softmax_rows(
                                        x, ad::Tensor<double>()), 25); }, {x}) < 1e-6);

        auto w = random_tensor({c, 3}, rng);
        auto b = random_tensor({3}, rng);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::matmul(x, w), 14); }, {x, w}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::affine(x, w, b), 15); }, {x, w, b}) < 1e-6);

        auto gamma = random_tensor({c}, rng, 0.5, 1.5);
        auto beta = random_tensor({c}, rng);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::layer_norm(x, gamma, beta), 16); },
                             {x, gamma, beta}) < 1e-5);

        auto kernel = random_tensor({3, c}, rng);
        auto kbias = random_tensor({c}, rng);
        CHECK(ad::grad_check(
                  [&] { return weighted_sum(ad::causal_depthwise_conv1d(x, kernel, kbias), 17); },
                  {x, kernel, kbias}) < 1e-6);

        auto wide = random_tensor({t, 2 * c}, rng);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::glu(wide), 18); }, {wide}) < 1e-6);

        auto pos = random_tensor({t, c}, rng, 0.5, 3.0);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::log_floor(pos, 1e-10), 19); }, {pos}) <
              1e-6);

        auto tall = random_tensor({5 + static_cast<int>(rng() % 5), c}, rng);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::frame_stack(tall, 4, 3), 20); }, {tall}) <
              1e-7);

        // relu/abs: keep inputs away from the kink.
        auto away = random_tensor({t, c}, rng, 0.2, 2.0);
        auto sign = random_tensor({t, c}, rng, -1.0, 1.0, false);
        for (size_t i = 0; i < away.values().size(); ++i) {
            if (sign.values()[i] < 0) away.values()[i] = -away.values()[i];
        }
        CHECK(ad::grad_check([&] { return weighted_sum(ad::relu(away), 21); }, {away}) < 1e-6);
        CHECK(ad::grad_check([&] { return weighted_sum(ad::abs(away), 22); }, {away}) < 1e-6);
    }
}

TEST_CASE("linear function grad_check is essentially exact") {
    std::mt19937_64 rng(5);
    auto x = random_tensor({4, 3}, rng);
    CHECK(ad::grad_check([&] { return weighted_sum(ad::scale(x, 3.0), 23); }, {x}) < 1e-9);
}

TEST_CASE("deliberately corrupted backward fails grad_check") {
    std::mt19937_64 rng(6);
    auto x = random_tensor({3, 3}, rng);
    // A "sigmoid" whose backward uses 0.5x the true derivative.
    auto bad_sigmoid = [](const Tensor<double> &a) {
        std::vector<double> v(a.numel());
        for (size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
        auto an = a.node();
        return ad::detail::make_op<double>(a.shape(), std::move(v), {a},
                                           [an](ad::Node<double> &o) {
            an->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) {
                const double s = o.value[i];
                an->grad[i] += 0.5 * o.grad[i] * s * (1.0 - s);
            }
        });
    };
    const double err = ad::grad_check([&] { return weighted_sum(bad_sigmoid(x), 24); }, {x});
    CHECK(err > 1e-2);
}

TEST_CASE("dropout is identity at p = 0 and rescales at p > 0") {
    std::mt19937_64 rng(8);
    auto x = random_tensor({4, 4}, rng);
    auto y = ad::dropout(x, 0.0);
    CHECK(y.values() == x.values());

    std::mt19937_64 drop_rng(9);
    auto z = ad::dropout(x, 0.5, &drop_rng);
    int zeros = 0;
    for (size_t i = 0; i < z.numel(); ++i) {
        if (z.values()[i] == 0.0) {
            ++zeros;
        } else {
            CHECK(z.values()[i] == doctest::Approx(2.0 * x.values()[i]));
        }
    }
    CHECK(zeros > 0);
    CHECK(zeros < static_cast<int>(z.numel()));
}

TEST_CASE("nan detection hook") {
    auto x = Tensor<float>::from_values({2}, {1.0f, 2.0f});
    CHECK_FALSE(ad::has_nonfinite(x));
    x.values()[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK(ad::has_nonfinite(x));
}
