#include <benchmark/benchmark.h>

#include "waveforge/evaluation.hpp"
#include "waveforge/experiments.hpp"
#include "waveforge/training.hpp"

using namespace waveforge;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    std::vector<double> data(static_cast<std::size_t>(numel(shape)));
    for (auto& v : data) {
        v = rng.normal();
    }
    return Tensor::from_data(std::move(shape), std::move(data));
}

void BM_Conv2dForward(benchmark::State& state) {
    Rng rng(1);
    const auto c = state.range(0);
    const Tensor x = random_tensor({32, c, 1, 64}, rng);
    const Tensor k = random_tensor({c, c, 1, 3}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ops::conv2d(x, k, Tensor(), {1, 1}, {0, 1}));
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dTrainStep(benchmark::State& state) {
    Rng rng(2);
    const auto c = state.range(0);
    Tensor k = random_tensor({c, c, 1, 3}, rng);
    k.set_requires_grad(true);
    const Tensor x = random_tensor({32, c, 1, 64}, rng);
    for (auto _ : state) {
        backward(ops::reduce_mean(ops::conv2d(x, k, Tensor(), {1, 1}, {0, 1})));
        k.zero_grad();
    }
}
BENCHMARK(BM_Conv2dTrainStep)->Arg(8)->Arg(16);

void BM_Matmul(benchmark::State& state) {
    Rng rng(3);
    const auto n = state.range(0);
    const Tensor a = random_tensor({n, n}, rng);
    const Tensor b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ops::matmul(a, b));
    }
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_TransposedConv(benchmark::State& state) {
    Rng rng(4);
    const auto c = state.range(0);
    const Tensor x = random_tensor({32, c, 1, 32}, rng);
    const Tensor k = random_tensor({c, c, 1, 4}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ops::transposed_conv2d(x, k, Tensor(), {1, 2}, {0, 1}));
    }
}
BENCHMARK(BM_TransposedConv)->Arg(8)->Arg(16);

void BM_GradientPenalty(benchmark::State& state) {
    Rng rng(5);
    models::ModelSpec spec;
    spec.variant = models::Variant::Disc1ch;
    spec.width_scale = 0.125;
    auto disc = models::build_discriminator(spec, rng);
    const Tensor xr = random_tensor({32, 1, 1, 64}, rng);
    const Tensor xf = random_tensor({32, 1, 1, 64}, rng);
    Rng noise(6);
    const layers::Ctx ctx{layers::Mode::Train, &noise};
    for (auto _ : state) {
        Rng gp_rng(7);
        const Tensor gp = training::gradient_penalty(
            [&](const Tensor& x) { return disc.forward(x, ctx); }, xr, xf, gp_rng);
        backward(gp);
    }
}
BENCHMARK(BM_GradientPenalty);

void BM_TrainingRound(benchmark::State& state) {
    const auto toy = data::gen_sinusoid_toy(512, 5.0, 1.0, 1.0, 9, data::PhaseMode::Fixed, 0.0);
    for (auto _ : state) {
        state.PauseTiming();
        Rng rng(11);
        models::ModelSpec gspec;
        gspec.variant = models::Variant::Gen1ch;
        gspec.width_scale = 0.125;
        auto gen = models::build_generator(gspec, rng);
        models::ModelSpec dspec = gspec;
        dspec.variant = models::Variant::Disc1ch;
        auto disc = models::build_discriminator(dspec, rng);
        training::TrainConfig cfg;
        cfg.batch_size = 32;
        cfg.max_steps = 1;
        cfg.eval_every = 1;
        state.ResumeTiming();
        benchmark::DoNotOptimize(training::train(gen, disc, toy, cfg));
    }
}
BENCHMARK(BM_TrainingRound)->Unit(benchmark::kMillisecond);

void BM_GmmEmFit(benchmark::State& state) {
    Rng rng(13);
    std::vector<std::vector<double>> samples;
    for (int i = 0; i < 600; ++i) {
        std::vector<double> x(16);
        for (auto& v : x) {
            v = rng.normal();
        }
        samples.push_back(std::move(x));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(eval::gmm_fit_em(samples, 3, 1));
    }
}
BENCHMARK(BM_GmmEmFit)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
