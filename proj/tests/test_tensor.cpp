#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "srrn/error.hpp"
#include "srrn/tensor.hpp"
#include "srrn/threads.hpp"

using namespace srrn;

namespace {

ConvParams random_conv(int out_c, int in_c, int k, std::mt19937& rng) {
    ConvParams p;
    p.weights = oracle::random_tensor(out_c, in_c, k, k, rng);
    p.bias.resize(out_c);
    std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
    for (float& b : p.bias) b = dist(rng);
    p.padding = k / 2;
    return p;
}

}  // namespace

TEST_CASE("conv2d: zero input passes only bias") {
    std::mt19937 rng(1);
    Tensor input(1, 1, 3, 3, 0.0f);
    ConvParams p = random_conv(1, 1, 3, rng);
    p.bias[0] = 0.5f;
    Tensor out = conv2d_forward(input, p);
    for (float v : out.data) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("conv2d: identity kernel reproduces input") {
    std::mt19937 rng(2);
    Tensor input = oracle::random_tensor(1, 1, 5, 7, rng);
    ConvParams p;
    p.weights = Tensor(1, 1, 3, 3, 0.0f);
    p.weights.at(0, 0, 1, 1) = 1.0f;
    p.bias = {0.0f};
    p.padding = 1;
    Tensor out = conv2d_forward(input, p);
    for (std::size_t i = 0; i < input.data.size(); ++i)
        CHECK(out.data[i] == input.data[i]);
}

TEST_CASE("conv2d forward matches the naive-loop oracle") {
    std::mt19937 rng(3);
    Tensor input = oracle::random_tensor(2, 3, 8, 8, rng);
    ConvParams p = random_conv(4, 3, 3, rng);
    Tensor got = conv2d_forward(input, p);
    Tensor want = oracle::naive_conv2d(input, p);
    for (std::size_t i = 0; i < got.data.size(); ++i)
        CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-5));
}

TEST_CASE("conv2d rejects channel mismatch naming the layer") {
    std::mt19937 rng(4);
    Tensor input = oracle::random_tensor(1, 2, 4, 4, rng);
    ConvParams p = random_conv(3, 5, 3, rng);
    CHECK_THROWS_WITH_AS(conv2d_forward(input, p, "body.c0.u0.conv0"),
                         doctest::Contains("body.c0.u0.conv0"), ConfigError);
}

TEST_CASE("conv2d backward: zero grad_out gives zero gradients") {
    std::mt19937 rng(5);
    Tensor input = oracle::random_tensor(1, 2, 4, 4, rng);
    ConvParams p = random_conv(3, 2, 3, rng);
    Tensor grad_out(1, 3, 4, 4, 0.0f);
    ConvGrads g = conv2d_backward(input, p, grad_out);
    for (float v : g.input.data) CHECK(v == 0.0f);
    for (float v : g.weights.data) CHECK(v == 0.0f);
    for (float v : g.bias) CHECK(v == 0.0f);
}

TEST_CASE("conv2d backward: 1x1 scalar chain rule") {
    Tensor input(1, 1, 1, 1);
    input.data[0] = 0.7f;
    ConvParams p;
    p.weights = Tensor(1, 1, 1, 1);
    p.weights.data[0] = -1.3f;
    p.bias = {0.2f};
    p.padding = 0;
    Tensor grad_out(1, 1, 1, 1);
    grad_out.data[0] = 2.0f;
    ConvGrads g = conv2d_backward(input, p, grad_out);
    CHECK(g.input.data[0] == doctest::Approx(-1.3f * 2.0f));
    CHECK(g.weights.data[0] == doctest::Approx(0.7f * 2.0f));
    CHECK(g.bias[0] == doctest::Approx(2.0f));
}

TEST_CASE("conv2d backward matches finite differences") {
    std::mt19937 rng(6);
    Tensor input = oracle::random_tensor(2, 2, 4, 4, rng);
    ConvParams p = random_conv(3, 2, 3, rng);
    Tensor grad_out = oracle::random_tensor(2, 3, 4, 4, rng);

    ConvGrads g = conv2d_backward(input, p, grad_out);
    auto objective = [&] {
        return oracle::dot_f64(oracle::conv_f64(oracle::DTensor(input), p), grad_out);
    };

    CHECK(oracle::max_rel_err(g.input.data,
                              oracle::finite_diff(input.data, objective)) <= 1e-3);
    CHECK(oracle::max_rel_err(g.weights.data,
                              oracle::finite_diff(p.weights.data, objective)) <= 1e-3);
    CHECK(oracle::max_rel_err(g.bias, oracle::finite_diff(p.bias, objective)) <= 1e-3);
}

TEST_CASE("relu forward and backward") {
    Tensor t(1, 1, 1, 3);
    t.data = {-1.0f, 0.0f, 2.0f};
    Tensor out = relu_forward(t);
    CHECK(out.data[0] == 0.0f);
    CHECK(out.data[1] == 0.0f);
    CHECK(out.data[2] == 2.0f);

    Tensor g(1, 1, 1, 3, 1.0f);
    Tensor back = relu_backward(t, g);
    CHECK(back.data[0] == 0.0f);
    CHECK(back.data[1] == 0.0f);   // subgradient at 0 is 0
    CHECK(back.data[2] == 1.0f);
}

TEST_CASE("relu on all-positive input is the identity") {
    std::mt19937 rng(7);
    Tensor t = oracle::random_tensor(1, 2, 3, 3, rng, 0.1f, 2.0f);
    Tensor out = relu_forward(t);
    for (std::size_t i = 0; i < t.data.size(); ++i) CHECK(out.data[i] == t.data[i]);
    Tensor g = oracle::random_tensor(1, 2, 3, 3, rng);
    Tensor back = relu_backward(t, g);
    for (std::size_t i = 0; i < g.data.size(); ++i) CHECK(back.data[i] == g.data[i]);
}

TEST_CASE("relu backward matches finite differences away from the kink") {
    std::mt19937 rng(8);
    const double step = 1e-3;
    Tensor input = oracle::random_tensor(2, 2, 4, 4, rng);
    for (float& v : input.data)
        if (std::abs(v) < 10 * step) v = 0.5f;   // keep clear of the dead zone
    Tensor grad_out = oracle::random_tensor(2, 2, 4, 4, rng);
    Tensor analytic = relu_backward(input, grad_out);
    auto objective = [&] { return oracle::dot(relu_forward(input), grad_out); };
    CHECK(oracle::max_rel_err(analytic.data,
                              oracle::finite_diff(input.data, objective, step)) <= 1e-3);
}

TEST_CASE("add: zeros identity, negation, gradient routing") {
    std::mt19937 rng(9);
    Tensor a = oracle::random_tensor(1, 2, 3, 3, rng);
    Tensor zeros(1, 2, 3, 3, 0.0f);
    Tensor sum = add_forward(a, zeros);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(sum.data[i] == a.data[i]);

    Tensor neg = a;
    for (float& v : neg.data) v = -v;
    Tensor cancel = add_forward(a, neg);
    for (float v : cancel.data) CHECK(v == 0.0f);

    Tensor mismatched(1, 3, 3, 3);
    CHECK_THROWS_AS(add_forward(a, mismatched), ConfigError);
}

TEST_CASE("bn: normalized input with gamma=1 beta=0 passes through") {
    // Construct per-channel zero-mean unit-variance data directly.
    Tensor input(2, 2, 2, 2);
    const float vals[8] = {-1.52f, -0.54f, 0.12f, 0.83f, 1.11f, -0.91f, 0.65f, 0.26f};
    for (int j = 0; j < 2; ++j) {
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < 8; ++i) mean += vals[i];
        mean /= 8.0;
        for (int i = 0; i < 8; ++i) var += (vals[i] - mean) * (vals[i] - mean);
        var /= 8.0;
        int i = 0;
        for (int item = 0; item < 2; ++item)
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x, ++i)
                    input.at(item, j, y, x) =
                        static_cast<float>((vals[i] - mean) / std::sqrt(var));
    }
    BnParams p;
    p.gamma.assign(2, 1.0f);
    p.beta.assign(2, 0.0f);
    p.running_mean.assign(2, 0.0f);
    p.running_var.assign(2, 0.0f);
    Tensor out = bn_forward(input, p, Mode::Train);
    for (std::size_t i = 0; i < input.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(input.data[i]).epsilon(1e-3));
}

TEST_CASE("bn: gamma=0 gives beta everywhere") {
    std::mt19937 rng(10);
    Tensor input = oracle::random_tensor(2, 3, 3, 3, rng);
    BnParams p;
    p.gamma.assign(3, 0.0f);
    p.beta.assign(3, 0.25f);
    p.running_mean.assign(3, 0.0f);
    p.running_var.assign(3, 0.0f);
    Tensor out = bn_forward(input, p, Mode::Train);
    for (float v : out.data) CHECK(v == doctest::Approx(0.25f));
}

TEST_CASE("bn: eval before any statistics is an explicit error") {
    Tensor input(1, 2, 2, 2, 0.5f);
    BnParams p;
    p.gamma.assign(2, 1.0f);
    p.beta.assign(2, 0.0f);
    p.running_mean.assign(2, 0.0f);
    p.running_var.assign(2, 0.0f);
    CHECK_THROWS_WITH_AS(bn_forward(input, p, Mode::Eval),
                         doctest::Contains("uninitialized"), UsageError);
}

TEST_CASE("bn backward matches finite differences") {
    std::mt19937 rng(11);
    Tensor input = oracle::random_tensor(2, 2, 3, 3, rng);
    Tensor grad_out = oracle::random_tensor(2, 2, 3, 3, rng);
    BnParams p;
    std::uniform_real_distribution<float> dist(0.5f, 1.5f);
    p.gamma = {dist(rng), dist(rng)};
    p.beta = {dist(rng) - 1.0f, dist(rng) - 1.0f};
    p.running_mean.assign(2, 0.0f);
    p.running_var.assign(2, 0.0f);

    BnCache cache;
    bn_forward(input, p, Mode::Train, &cache);
    BnGrads g = bn_backward(input, p, cache, grad_out);

    auto objective = [&] {
        return oracle::dot_f64(oracle::bn_train_f64(oracle::DTensor(input), p), grad_out);
    };
    CHECK(oracle::max_rel_err(g.input.data,
                              oracle::finite_diff(input.data, objective)) <= 1e-3);
    CHECK(oracle::max_rel_err(g.gamma, oracle::finite_diff(p.gamma, objective)) <= 1e-3);
    CHECK(oracle::max_rel_err(g.beta, oracle::finite_diff(p.beta, objective)) <= 1e-3);
}

TEST_CASE("bn running statistics follow an exponential moving average") {
    Tensor batch1(1, 1, 2, 2);
    batch1.data = {1.0f, 1.0f, 3.0f, 3.0f};   // mean 2, var 1
    Tensor batch2(1, 1, 2, 2);
    batch2.data = {4.0f, 4.0f, 8.0f, 8.0f};   // mean 6, var 4
    BnParams p;
    p.gamma.assign(1, 1.0f);
    p.beta.assign(1, 0.0f);
    p.running_mean.assign(1, 0.0f);
    p.running_var.assign(1, 0.0f);
    bn_forward(batch1, p, Mode::Train);
    CHECK(p.running_mean[0] == doctest::Approx(2.0f));   // first batch seeds stats
    CHECK(p.running_var[0] == doctest::Approx(1.0f));
    bn_forward(batch2, p, Mode::Train);
    CHECK(p.running_mean[0] == doctest::Approx(0.9f * 2.0f + 0.1f * 6.0f));
    CHECK(p.running_var[0] == doctest::Approx(0.9f * 1.0f + 0.1f * 4.0f));
}

TEST_CASE("shape preservation for k in {1,3}") {
    std::mt19937 rng(12);
    for (int k : {1, 3}) {
        Tensor input = oracle::random_tensor(2, 3, 5, 6, rng);
        ConvParams p = random_conv(4, 3, k, rng);
        Tensor out = conv2d_forward(input, p);
        CHECK(out.n == 2);
        CHECK(out.c == 4);
        CHECK(out.h == 5);
        CHECK(out.w == 6);
    }
}

TEST_CASE("conv linearity with zero bias") {
    std::mt19937 rng(13);
    Tensor x = oracle::random_tensor(1, 2, 5, 5, rng);
    Tensor y = oracle::random_tensor(1, 2, 5, 5, rng);
    ConvParams p = random_conv(3, 2, 3, rng);
    for (float& b : p.bias) b = 0.0f;
    const float alpha = 0.7f, beta = -1.9f;

    Tensor mix(1, 2, 5, 5);
    for (std::size_t i = 0; i < mix.data.size(); ++i)
        mix.data[i] = alpha * x.data[i] + beta * y.data[i];
    Tensor lhs = conv2d_forward(mix, p);
    Tensor fx = conv2d_forward(x, p);
    Tensor fy = conv2d_forward(y, p);
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        CHECK(lhs.data[i] ==
              doctest::Approx(alpha * fx.data[i] + beta * fy.data[i]).epsilon(1e-5));
}

TEST_CASE("results do not depend on worker count") {
    std::mt19937 rng(14);
    Tensor input = oracle::random_tensor(2, 3, 9, 9, rng);
    ConvParams p = random_conv(5, 3, 3, rng);
    Tensor grad_out = oracle::random_tensor(2, 5, 9, 9, rng);

    set_thread_count(1);
    Tensor out1 = conv2d_forward(input, p);
    ConvGrads g1 = conv2d_backward(input, p, grad_out);
    set_thread_count(4);
    Tensor out4 = conv2d_forward(input, p);
    ConvGrads g4 = conv2d_backward(input, p, grad_out);
    set_thread_count(1);

    CHECK(out1.data == out4.data);        // bit-identical
    CHECK(g1.input.data == g4.input.data);
    CHECK(g1.weights.data == g4.weights.data);
}

TEST_CASE("determinism: repeated evaluation is bit-identical") {
    std::mt19937 rng(15);
    Tensor input = oracle::random_tensor(1, 2, 6, 6, rng);
    ConvParams p = random_conv(2, 2, 3, rng);
    Tensor a = conv2d_forward(input, p);
    Tensor b = conv2d_forward(input, p);
    CHECK(a.data == b.data);
}
