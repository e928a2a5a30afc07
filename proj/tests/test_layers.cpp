#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/test_util.hpp"
#include "waveforge/layers.hpp"

using namespace waveforge;
using namespace waveforge::layers;
using testutil::finite_diff;
using testutil::max_rel_err;
using testutil::random_tensor;

TEST_CASE("deconv kernel size formula") {
    CHECK(deconv_kernel_size(3) == 5);
    CHECK(deconv_kernel_size(2) == 4);
    CHECK(deconv_kernel_size(1) == 1);
    for (std::int64_t s = 1; s <= 8; ++s) {
        CHECK(deconv_kernel_size(s) == 2 * s - s % 2);
    }
    CHECK_THROWS_AS(deconv_kernel_size(0), ValueError);
}

TEST_CASE("bilinear deconvolution weights") {
    const auto w3 = bilinear_init_weights(3);
    REQUIRE(w3.size() == 5);
    CHECK(w3[0] == doctest::Approx(1.0 / 3.0));
    CHECK(w3[1] == doctest::Approx(2.0 / 3.0));
    CHECK(w3[2] == doctest::Approx(1.0));
    CHECK(w3[3] == doctest::Approx(2.0 / 3.0));
    CHECK(w3[4] == doctest::Approx(1.0 / 3.0));

    const auto w2 = bilinear_init_weights(2);
    REQUIRE(w2.size() == 4);
    CHECK(w2[0] == doctest::Approx(0.25));
    CHECK(w2[1] == doctest::Approx(0.75));
    CHECK(w2[2] == doctest::Approx(0.75));
    CHECK(w2[3] == doctest::Approx(0.25));

    CHECK(bilinear_init_weights(1) == std::vector<double>{1.0});
}

TEST_CASE("bilinear weights are symmetric and phase sums are one") {
    for (std::int64_t s = 1; s <= 6; ++s) {
        const auto w = bilinear_init_weights(s);
        const std::size_t k = w.size();
        double peak = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(w[i] == doctest::Approx(w[k - 1 - i]));
            peak = std::max(peak, w[i]);
        }
        if (s % 2 == 1) {
            CHECK(peak == doctest::Approx(1.0));
        }
        // Every stride-strided sub-sampling sums to 1: constants are
        // upsampled without amplitude ripple.
        for (std::int64_t phase = 0; phase < s; ++phase) {
            double sum = 0.0;
            for (std::size_t i = static_cast<std::size_t>(phase); i < k;
                 i += static_cast<std::size_t>(s)) {
                sum += w[i];
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("bilinear-initialized deconvolution reproduces linear interpolation") {
    Rng rng(41);
    for (const std::int64_t stride : {2LL, 3LL}) {
        const std::int64_t k = deconv_kernel_size(stride);
        const auto w = bilinear_init_weights(stride);
        std::vector<double> kern(static_cast<std::size_t>(k));
        for (std::int64_t i = 0; i < k; ++i) {
            kern[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)];
        }
        const Tensor kernel = Tensor::from_data({1, 1, 1, k}, std::move(kern));
        const std::int64_t n = 9;
        const Tensor x = random_tensor({1, 1, 1, n}, rng);
        const Tensor y = ops::transposed_conv2d(x, kernel, Tensor(), {1, stride}, {0, 1});
        REQUIRE(y.shape()[3] == (n - 1) * stride + k - 2);

        // Output j sits at input coordinate (j + 1 - (k-1)/2) / stride.
        const double center = static_cast<double>(k - 1) / 2.0;
        std::int64_t interior = 0;
        for (std::int64_t j = 0; j < y.shape()[3]; ++j) {
            const double coord = (static_cast<double>(j) + 1.0 - center) /
                                 static_cast<double>(stride);
            if (coord < 0.0 || coord > static_cast<double>(n - 1)) {
                continue;
            }
            const auto lo = static_cast<std::int64_t>(std::floor(coord));
            const std::int64_t hi = std::min(lo + 1, n - 1);
            const double t = coord - static_cast<double>(lo);
            const double expect = (1.0 - t) * x.at(lo) + t * x.at(hi);
            CHECK(std::abs(y.at(j) - expect) < 1e-12);
            ++interior;
        }
        CHECK(interior > n); // the check actually covered the interior
    }
}

TEST_CASE("nearest and bicubic upsampling") {
    const Tensor x = Tensor::from_data({1, 1, 1, 2}, {1, 2});
    const Tensor up = upsample_interpolate(x, {1, 2}, InterpMethod::Nearest);
    CHECK(up.shape() == Shape{1, 1, 1, 4});
    CHECK(up.at(0) == 1.0);
    CHECK(up.at(1) == 1.0);
    CHECK(up.at(2) == 2.0);
    CHECK(up.at(3) == 2.0);

    // Interpolation reproduces constants exactly.
    const Tensor c = Tensor::full({1, 1, 3, 4}, 2.5);
    const Tensor bc = upsample_interpolate(c, {2, 2}, InterpMethod::Bicubic);
    for (std::int64_t i = 0; i < bc.size(); ++i) {
        CHECK(std::abs(bc.at(i) - 2.5) < 1e-12);
    }

    // Direct evaluation of the cubic kernel at interior positions.
    const Tensor ramp = Tensor::from_data({1, 1, 1, 4}, {0, 1, 2, 3});
    const Tensor out = upsample_interpolate(ramp, {1, 2}, InterpMethod::Bicubic);
    REQUIRE(out.shape()[3] == 8);
    for (std::int64_t j = 0; j < 8; ++j) {
        const double pos = (static_cast<double>(j) + 0.5) / 2.0 - 0.5;
        const std::int64_t base = static_cast<std::int64_t>(std::floor(pos));
        if (base < 1 || base + 2 > 3) {
            continue; // edge-clamped positions
        }
        const auto w = ops::bicubic_weights(pos - static_cast<double>(base));
        double expect = 0.0;
        for (int q = 0; q < 4; ++q) {
            expect += w[static_cast<std::size_t>(q)] * ramp.at(base - 1 + q);
        }
        CHECK(std::abs(out.at(j) - expect) < 1e-10);
    }

    CHECK_THROWS_AS(upsample_interpolate(x, {1, 0}, InterpMethod::Nearest), ValueError);
}

TEST_CASE("gaussian noise layer") {
    Rng rng(43);
    const Tensor x = random_tensor({2, 1, 1, 8}, rng);

    const Tensor zero_sigma = gaussian_noise(x, 0.0, Mode::Train, &rng);
    const Tensor eval_pass = gaussian_noise(x, 0.7, Mode::Eval, nullptr);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(zero_sigma.at(i) == x.at(i));
        CHECK(eval_pass.at(i) == x.at(i));
    }
    CHECK_THROWS_AS(gaussian_noise(x, -0.1, Mode::Train, &rng), ValueError);

    // Monte-Carlo check of the configured spread.
    const std::int64_t n = 1'000'000;
    const Tensor zeros = Tensor::zeros({1, 1, 1, n});
    const Tensor noisy = gaussian_noise(zeros, 0.05, Mode::Train, &rng);
    double mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        mean += noisy.at(i);
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        var += (noisy.at(i) - mean) * (noisy.at(i) - mean);
    }
    var /= static_cast<double>(n);
    const double stddev = std::sqrt(var);
    CHECK(stddev > 0.0495);
    CHECK(stddev < 0.0505);

    // Gradient passes through unchanged.
    Tensor g = random_tensor({2, 1, 1, 4}, rng, true);
    backward(ops::reduce_sum(gaussian_noise(g, 0.3, Mode::Train, &rng)));
    for (std::int64_t i = 0; i < g.size(); ++i) {
        CHECK(g.grad().at(i) == 1.0);
    }
}

TEST_CASE("center crop") {
    Rng rng(47);
    const Tensor x = random_tensor({1, 2, 72, 72}, rng);
    const Tensor y = center_crop(x, 64, 64);
    CHECK(y.shape() == Shape{1, 2, 64, 64});
    // Offsets (4, 4): spot-check the corner mapping.
    CHECK(y.at(0) == x.at(4 * 72 + 4));

    const Tensor same = center_crop(x, 72, 72);
    for (std::int64_t i = 0; i < 16; ++i) {
        CHECK(same.at(i) == x.at(i));
    }
    CHECK_THROWS_AS(center_crop(x, 80, 64), ShapeError);

    // Gradient is zero outside the kept window.
    Tensor small = random_tensor({1, 1, 4, 4}, rng, true);
    backward(ops::reduce_sum(center_crop(small, 2, 2)));
    const auto g = small.grad();
    for (std::int64_t h = 0; h < 4; ++h) {
        for (std::int64_t w = 0; w < 4; ++w) {
            const bool kept = h >= 1 && h <= 2 && w >= 1 && w <= 2;
            CHECK(g.at(h * 4 + w) == (kept ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("crop of pad is identity on the kept window") {
    Rng rng(53);
    const Tensor x = random_tensor({2, 3, 5, 7}, rng);
    const Tensor padded = ops::pad_window(x, {2, 3}, {9, 13});
    const Tensor back = ops::crop_window(padded, {2, 3}, {5, 7});
    REQUIRE(back.shape() == x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(back.at(i) == x.at(i));
    }
}

TEST_CASE("zero mean normalization") {
    const Tensor v = zero_mean_normalize(Tensor::from_data({3}, {1, 2, 3}));
    CHECK(v.at(0) == doctest::Approx(-1.0));
    CHECK(v.at(1) == doctest::Approx(0.0));
    CHECK(v.at(2) == doctest::Approx(1.0));

    Rng rng(59);
    const Tensor x = random_tensor({3, 1, 64, 64}, rng);
    const Tensor z = zero_mean_normalize(x);
    for (std::int64_t b = 0; b < 3; ++b) {
        double mean = 0.0;
        for (std::int64_t i = 0; i < 64 * 64; ++i) {
            mean += z.at(b * 64 * 64 + i);
        }
        mean /= 64.0 * 64.0;
        CHECK(std::abs(mean) < 1e-12);
    }
    // Idempotence.
    const Tensor zz = zero_mean_normalize(z);
    for (std::int64_t i = 0; i < 32; ++i) {
        CHECK(zz.at(i) == doctest::Approx(z.at(i)).epsilon(1e-12));
    }
}

TEST_CASE("batch norm layer") {
    Rng rng(61);
    Shape shape{16};
    auto bn = build_layer({.kind = LayerKind::BatchNorm}, shape, rng);
    const Tensor x = random_tensor({8, 16}, rng, false, 3.0);
    const Ctx train{Mode::Train, &rng};
    const Tensor y = bn->forward(x, train);

    // gamma = 1, beta = 0: unit batch statistics per feature.
    for (std::int64_t f = 0; f < 16; ++f) {
        double mean = 0.0;
        for (std::int64_t b = 0; b < 8; ++b) {
            mean += y.at(b * 16 + f);
        }
        mean /= 8.0;
        double var = 0.0;
        for (std::int64_t b = 0; b < 8; ++b) {
            var += (y.at(b * 16 + f) - mean) * (y.at(b * 16 + f) - mean);
        }
        var /= 8.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }

    // gamma = 2, beta = 3 on standardized columns.
    std::vector<NamedParam> params;
    bn->collect_params("bn", params);
    REQUIRE(params.size() == 4);
    for (auto& p : params) {
        if (p.name == "bn.gamma") {
            std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), 2.0);
        }
        if (p.name == "bn.beta") {
            std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), 3.0);
        }
    }
    const Tensor y2 = bn->forward(x, train);
    for (std::int64_t f = 0; f < 2; ++f) {
        double mean = 0.0;
        for (std::int64_t b = 0; b < 8; ++b) {
            mean += y2.at(b * 16 + f);
        }
        mean /= 8.0;
        CHECK(mean == doctest::Approx(3.0).epsilon(1e-9));
    }

    // Train-mode batch of one is rejected.
    CHECK_THROWS_AS(bn->forward(random_tensor({1, 16}, rng), train), ValueError);

    // Gradient against finite differences (fresh layer, gamma/beta free).
    Shape s2{6};
    auto bn2 = build_layer({.kind = LayerKind::BatchNorm}, s2, rng);
    Tensor xin = random_tensor({5, 6}, rng, true);
    std::vector<NamedParam> p2;
    bn2->collect_params("bn", p2);
    auto value = [&]() {
        // Keep running-stat updates out of the finite-difference loop.
        const Tensor out = bn2->forward(xin, Ctx{Mode::Train, &rng});
        double acc = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) {
            acc += out.at(i) * (static_cast<double>(i % 7) - 3.0);
        }
        return acc;
    };
    Tensor weights = Tensor::zeros(Shape{5, 6});
    {
        auto wd = weights.mutable_data();
        for (std::size_t i = 0; i < wd.size(); ++i) {
            wd[i] = static_cast<double>(i % 7) - 3.0;
        }
    }
    backward(ops::reduce_sum(ops::mul(bn2->forward(xin, Ctx{Mode::Train, &rng}), weights)));
    CHECK(max_rel_err(xin.grad().data(), finite_diff(value, xin)) < 1e-4);
    for (auto& p : p2) {
        if (!p.trainable) {
            continue;
        }
        CHECK(max_rel_err(p.tensor.grad().data(), finite_diff(value, p.tensor)) < 1e-4);
    }
}

TEST_CASE("activation, softmax and embedding examples") {
    const Tensor neg = ops::leaky_relu(Tensor::from_data({1}, {-1.0}), 0.2);
    CHECK(neg.item() == doctest::Approx(-0.2));

    const Tensor sm = softmax(Tensor::from_data({1, 2}, {0.0, 0.0}));
    CHECK(sm.at(0) == doctest::Approx(0.5));
    CHECK(sm.at(1) == doctest::Approx(0.5));
    const Tensor ce = softmax_cross_entropy(Tensor::from_data({1, 2}, {0.0, 0.0}), {0});
    CHECK(ce.item() == doctest::Approx(std::log(2.0)));

    // Softmax rows are positive and sum to one.
    Rng rng(67);
    const Tensor probs = softmax(random_tensor({5, 7}, rng, false, 4.0));
    for (std::int64_t b = 0; b < 5; ++b) {
        double sum = 0.0;
        for (std::int64_t j = 0; j < 7; ++j) {
            CHECK(probs.at(b * 7 + j) > 0.0);
            sum += probs.at(b * 7 + j);
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    // Embedding lookup returns the exact table row.
    ClassEmbedding embed(3, 4, rng);
    const Tensor z = Tensor::ones({2, 4});
    const Tensor conditioned = embed.forward(z, {1, 2});
    for (std::int64_t j = 0; j < 4; ++j) {
        CHECK(conditioned.at(j) == embed.table().at(4 + j));
        CHECK(conditioned.at(4 + j) == embed.table().at(8 + j));
    }
    CHECK_THROWS_AS(embed.forward(z, {0, 3}), ValueError);

    CHECK_THROWS_AS(softmax_cross_entropy(Tensor::from_data({1, 2}, {0.0, 0.0}), {0, 1}),
                    ShapeError);
}

TEST_CASE("softmax cross entropy gradient matches finite differences") {
    Rng rng(71);
    Tensor logits = random_tensor({6, 3}, rng, true, 2.0);
    const std::vector<std::int64_t> labels = {0, 1, 2, 1, 0, 2};
    auto value = [&]() { return softmax_cross_entropy(logits, labels).item(); };
    backward(softmax_cross_entropy(logits, labels));
    CHECK(max_rel_err(logits.grad().data(), finite_diff(value, logits)) < 1e-4);
}

TEST_CASE("bilinear init rejects mismatched kernel size") {
    Rng rng(73);
    Shape shape{4, 1, 8};
    LayerConfig cfg{.kind = LayerKind::TransposedConv2d, .channels = 4};
    cfg.kernel = {1, 3}; // stride-2 bilinear kernel must be 4 wide
    cfg.stride = {1, 2};
    cfg.pad = {0, 1};
    cfg.init = InitScheme::BilinearDeconv;
    CHECK_THROWS_AS(build_layer(cfg, shape, rng), ValueError);
}
