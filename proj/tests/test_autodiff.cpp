#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "support/test_util.hpp"
#include "waveforge/ops.hpp"

using namespace waveforge;
using testutil::dot;
using testutil::finite_diff;
using testutil::max_rel_err;
using testutil::random_tensor;

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({0}, {}), ShapeError);
    const Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(numel(t.shape()) == 6);
    CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("elementwise examples") {
    const Tensor a = Tensor::from_data({2}, {1, 2});
    const Tensor b = Tensor::from_data({2}, {3, 4});
    const Tensor sum = ops::add(a, b);
    CHECK(sum.at(0) == 4.0);
    CHECK(sum.at(1) == 6.0);

    CHECK(ops::reduce_mean(Tensor::from_data({3}, {2, 4, 6})).item() == doctest::Approx(4.0));

    // Annihilation: x * 0 has zero value and zero gradient.
    Tensor x = Tensor::from_data({4}, {1, -2, 3, -4}, true);
    const Tensor z = ops::mul(x, Tensor::zeros({4}));
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(z.at(i) == 0.0);
    }
    backward(ops::reduce_sum(z));
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(x.grad().at(i) == 0.0);
    }
}

TEST_CASE("shape mismatch errors name both shapes") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({3, 2});
    try {
        ops::add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[3,2]") != std::string::npos);
    }
}

TEST_CASE("matmul examples") {
    const Tensor id = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    const Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    const Tensor prod = ops::matmul(id, m);
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(prod.at(i) == m.at(i));
    }

    const Tensor row = Tensor::from_data({1, 2}, {1, 2});
    const Tensor col = Tensor::from_data({2, 1}, {3, 4});
    CHECK(ops::matmul(row, col).item() == doctest::Approx(11.0));

    CHECK_THROWS_AS(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng, true);
    Tensor b = random_tensor({4, 2}, rng, true);
    auto loss_value = [&]() { return ops::reduce_sum(ops::matmul(a, b)).item(); };

    const Tensor loss = ops::reduce_sum(ops::matmul(a, b));
    backward(loss);
    CHECK(max_rel_err(a.grad().data(), finite_diff(loss_value, a)) < 1e-4);
    CHECK(max_rel_err(b.grad().data(), finite_diff(loss_value, b)) < 1e-4);
}

TEST_CASE("conv2d analytic examples") {
    // All-ones 3x3 input and kernel collapse to the window sum.
    const Tensor x = Tensor::ones({1, 1, 3, 3});
    const Tensor k = Tensor::ones({1, 1, 3, 3});
    const Tensor y = ops::conv2d(x, k, Tensor(), {1, 1}, {0, 0});
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == doctest::Approx(9.0));

    // Centered delta kernel with same padding reproduces the input.
    Rng rng(3);
    const Tensor img = random_tensor({1, 1, 4, 5}, rng);
    Tensor delta = Tensor::zeros({1, 1, 3, 3});
    delta.mutable_data()[4] = 1.0;
    const Tensor same = ops::conv2d(img, delta, Tensor(), {1, 1}, {1, 1});
    CHECK(same.shape() == img.shape());
    for (std::int64_t i = 0; i < img.size(); ++i) {
        CHECK(same.at(i) == doctest::Approx(img.at(i)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(ops::conv2d(Tensor::ones({1, 1, 2, 2}), Tensor::ones({1, 1, 3, 3}),
                                Tensor(), {1, 1}, {0, 0}),
                    ShapeError);
}

// Independent six-loop reference used as the convolution oracle.
namespace {
std::vector<double> naive_conv(const Tensor& x, const Tensor& k, Hw stride, Hw pad) {
    const auto& xs = x.shape();
    const auto& ks = k.shape();
    const std::int64_t ho = (xs[2] + 2 * pad.h - ks[2]) / stride.h + 1;
    const std::int64_t wo = (xs[3] + 2 * pad.w - ks[3]) / stride.w + 1;
    std::vector<double> out(static_cast<std::size_t>(xs[0] * ks[0] * ho * wo), 0.0);
    for (std::int64_t n = 0; n < xs[0]; ++n)
        for (std::int64_t f = 0; f < ks[0]; ++f)
            for (std::int64_t oh = 0; oh < ho; ++oh)
                for (std::int64_t ow = 0; ow < wo; ++ow) {
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < xs[1]; ++c)
                        for (std::int64_t i = 0; i < ks[2]; ++i)
                            for (std::int64_t j = 0; j < ks[3]; ++j) {
                                const std::int64_t hi = oh * stride.h - pad.h + i;
                                const std::int64_t wi = ow * stride.w - pad.w + j;
                                if (hi < 0 || hi >= xs[2] || wi < 0 || wi >= xs[3]) {
                                    continue;
                                }
                                acc += x.at(((n * xs[1] + c) * xs[2] + hi) * xs[3] + wi) *
                                       k.at(((f * ks[1] + c) * ks[2] + i) * ks[3] + j);
                            }
                    out[static_cast<std::size_t>(((n * ks[0] + f) * ho + oh) * wo + ow)] = acc;
                }
    return out;
}
} // namespace

TEST_CASE("conv2d matches the naive loop oracle") {
    Rng rng(11);
    const Tensor x = random_tensor({1, 2, 5, 5}, rng);
    const Tensor k = random_tensor({3, 2, 3, 3}, rng);
    for (const Hw stride : {Hw{1, 1}, Hw{1, 2}, Hw{2, 2}}) {
        for (const Hw pad : {Hw{0, 0}, Hw{1, 1}}) {
            const Tensor y = ops::conv2d(x, k, Tensor(), stride, pad);
            const auto ref = naive_conv(x, k, stride, pad);
            REQUIRE(static_cast<std::size_t>(y.size()) == ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i) {
                CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("transposed conv spreads a bilinear kernel into linear interpolation") {
    // Stride-3 upsampling of [1, 2]: the interior of the full spread holds
    // the third-steps between the inputs.
    const Tensor x = Tensor::from_data({1, 1, 1, 2}, {1, 2});
    const Tensor k =
        Tensor::from_data({1, 1, 1, 5}, {1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0});
    const Tensor y = ops::transposed_conv2d(x, k, Tensor(), {1, 3}, {0, 0});
    CHECK(y.shape() == Shape{1, 1, 1, 8});
    CHECK(y.at(2) == doctest::Approx(1.0));
    CHECK(y.at(3) == doctest::Approx(4.0 / 3.0));
    CHECK(y.at(4) == doctest::Approx(5.0 / 3.0));
    CHECK(y.at(5) == doctest::Approx(2.0));

    // Unit kernel, stride 1: identity.
    Rng rng(5);
    const Tensor v = random_tensor({2, 3, 1, 7}, rng);
    const Tensor unit = Tensor::from_data({3, 3, 1, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const Tensor same = ops::transposed_conv2d(v, unit, Tensor(), {1, 1}, {0, 0});
    REQUIRE(same.shape() == v.shape());
    for (std::int64_t i = 0; i < v.size(); ++i) {
        CHECK(same.at(i) == doctest::Approx(v.at(i)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(ops::transposed_conv2d(x, k, Tensor(), {1, 0}, {0, 0}), ValueError);
}

TEST_CASE("conv2d and transposed_conv2d are adjoint") {
    Rng rng(17);
    // Kernel/stride/padding combinations the model builders use.
    struct Combo {
        Shape x, k;
        Hw stride, pad;
    };
    const std::vector<Combo> combos = {
        {{2, 1, 1, 64}, {8, 1, 1, 3}, {1, 1}, {0, 1}},
        {{2, 8, 1, 64}, {16, 8, 1, 3}, {1, 2}, {0, 1}},
        {{2, 8, 1, 32}, {16, 8, 1, 4}, {1, 2}, {0, 1}},
        {{1, 2, 16, 16}, {3, 2, 3, 3}, {1, 1}, {1, 1}},
        {{1, 2, 16, 16}, {3, 2, 3, 3}, {2, 2}, {1, 1}},
        {{1, 2, 9, 9}, {3, 2, 4, 4}, {2, 2}, {1, 1}},
        {{1, 3, 6, 6}, {2, 3, 3, 3}, {2, 2}, {0, 0}},
    };
    for (const auto& c : combos) {
        const Tensor x = random_tensor(c.x, rng);
        const Tensor k = random_tensor(c.k, rng);
        const Tensor cx = ops::conv2d(x, k, Tensor(), c.stride, c.pad);
        const Tensor y = random_tensor(cx.shape(), rng);
        // Transposed kernel layout shares the memory layout of the forward
        // kernel: [F, C, kh, kw] read as [Cin=F, Cout=C, kh, kw].
        const Tensor ty = ops::conv2d_data_adjoint(y, k, c.stride, c.pad,
                                                   {c.x[2], c.x[3]});
        const double lhs = dot(cx.data(), y.data());
        const double rhs = dot(x.data(), ty.data());
        CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max({1.0, std::abs(lhs), std::abs(rhs)}));
    }
}

TEST_CASE("backward basics") {
    // Gradient of sum is all ones regardless of shape.
    Rng rng(23);
    Tensor x = random_tensor({2, 3, 2}, rng, true);
    backward(ops::reduce_sum(x));
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(x.grad().at(i) == 1.0);
    }

    CHECK_THROWS_AS(backward(Tensor::from_data({2}, {1, 2}, true)), TapeError);
}

TEST_CASE("double backward without re-recording is rejected") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    const Tensor loss = ops::reduce_sum(ops::mul(x, x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), TapeError);
}

TEST_CASE("leaky relu chain gradient matches finite differences") {
    Rng rng(29);
    Tensor w = random_tensor({4, 6}, rng, true);
    const Tensor x = random_tensor({6, 3}, rng);
    auto value = [&]() {
        return ops::reduce_mean(ops::leaky_relu(ops::matmul(w, x), 0.2)).item();
    };
    backward(ops::reduce_mean(ops::leaky_relu(ops::matmul(w, x), 0.2)));
    CHECK(max_rel_err(w.grad().data(), finite_diff(value, w)) < 1e-4);
}

TEST_CASE("nested gradient of a quadratic critic matches finite differences") {
    // D(x) = x A x^T; loss = |grad_x D|_2. The loss gradient needs one level
    // of differentiation through the first gradient.
    Rng rng(31);
    const Tensor a = random_tensor({5, 5}, rng);
    Tensor x = random_tensor({1, 5}, rng, true);

    auto loss_expr = [&]() {
        const Tensor d = ops::reduce_sum(ops::mul(ops::matmul(x, a), x));
        const Tensor g = grad(d, {x}, /*create_graph=*/true)[0];
        return ops::pow_scalar(ops::reduce_sum(ops::mul(g, g)), 0.5);
    };
    auto value = [&]() { return loss_expr().item(); };

    backward(loss_expr());
    const auto fd = finite_diff(value, x);
    CHECK(max_rel_err(x.grad().data(), fd) < 1e-3);
}

TEST_CASE("gradient suite across randomized primitive configurations") {
    // Every primitive against central finite differences on fresh shapes.
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        Rng rng(seed);
        const std::int64_t n = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
        const std::int64_t m = 2 + static_cast<std::int64_t>(rng.uniform_int(3));
        Tensor a = random_tensor({n, m}, rng, true);
        Tensor b = random_tensor({n, m}, rng, true);
        Tensor k = random_tensor({2, 1, 1, 3}, rng, true);
        Tensor img = random_tensor({1, 1, 1, 8}, rng, true);

        struct Case {
            const char* name;
            std::function<Tensor()> expr;
            Tensor* wrt;
        };
        const std::vector<Case> cases = {
            {"add", [&] { return ops::reduce_sum(ops::add(a, b)); }, &a},
            {"sub", [&] { return ops::reduce_sum(ops::sub(a, b)); }, &b},
            {"mul", [&] { return ops::reduce_sum(ops::mul(a, b)); }, &a},
            {"scalar_mul", [&] { return ops::reduce_sum(ops::scalar_mul(a, -1.7)); }, &a},
            {"exp", [&] { return ops::reduce_sum(ops::exp(ops::scalar_mul(a, 0.3))); }, &a},
            {"log",
             [&] {
                 return ops::reduce_sum(
                     ops::log(ops::scalar_add(ops::mul(a, a), 1.0)));
             },
             &a},
            {"pow", [&] { return ops::reduce_sum(ops::pow_scalar(ops::scalar_add(ops::mul(a, a), 0.5), 1.5)); }, &a},
            {"reduce_mean", [&] { return ops::reduce_mean(ops::mul(a, b)); }, &b},
            {"reduce_axes",
             [&] { return ops::reduce_sum(ops::pow_scalar(ops::reduce_sum_axes(ops::mul(a, a), {1}), 2.0)); },
             &a},
            {"expand",
             [&] {
                 const Tensor row = ops::reduce_sum_axes(a, {0});
                 return ops::reduce_sum(ops::mul(ops::expand_axes(row, a.shape(), {0}), b));
             },
             &a},
            {"transpose", [&] { return ops::reduce_sum(ops::mul(ops::transpose2d(a), ops::transpose2d(b))); }, &a},
            {"reshape", [&] { return ops::reduce_sum(ops::mul(ops::reshape(a, {m, n}), ops::reshape(b, {m, n}))); }, &a},
            {"conv", [&] { return ops::reduce_mean(ops::conv2d(img, k, Tensor(), {1, 2}, {0, 1})); }, &k},
            {"conv_x", [&] { return ops::reduce_mean(ops::conv2d(img, k, Tensor(), {1, 1}, {0, 1})); }, &img},
            {"tconv",
             [&] {
                 const Tensor kt = ops::reshape(k, {1, 2, 1, 3});
                 return ops::reduce_mean(ops::transposed_conv2d(img, kt, Tensor(), {1, 2}, {0, 1}));
             },
             &k},
            {"leaky", [&] { return ops::reduce_sum(ops::leaky_relu(a, 0.2)); }, &a},
        };
        for (const auto& c : cases) {
            auto value = [&]() { return c.expr().item(); };
            c.wrt->zero_grad();
            backward(c.expr());
            const auto fd = finite_diff(value, *c.wrt);
            INFO("op = ", c.name, ", seed = ", seed);
            CHECK(max_rel_err(c.wrt->grad().data(), fd) < 1e-4);
        }
    }
}

TEST_CASE("ops are bit-deterministic") {
    Rng rng1(99);
    Rng rng2(99);
    const Tensor x1 = random_tensor({2, 3, 4, 4}, rng1);
    const Tensor k1 = random_tensor({2, 3, 3, 3}, rng1);
    const Tensor x2 = random_tensor({2, 3, 4, 4}, rng2);
    const Tensor k2 = random_tensor({2, 3, 3, 3}, rng2);
    const Tensor y1 = ops::conv2d(x1, k1, Tensor(), {1, 1}, {1, 1});
    const Tensor y2 = ops::conv2d(x2, k2, Tensor(), {1, 1}, {1, 1});
    CHECK(std::memcmp(y1.data().data(), y2.data().data(),
                      static_cast<std::size_t>(y1.size()) * sizeof(double)) == 0);
}
