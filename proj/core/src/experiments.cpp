#include "waveforge/experiments.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

#include "waveforge/evaluation.hpp"

namespace waveforge {
namespace experiments {

ToyRunResult run_toy_training(const data::EpochDataset& toy, const training::TrainConfig& cfg,
                              models::UpsampleScheme scheme, double width_scale, int signal_bin,
                              std::int64_t n_eval) {
    models::ModelSpec gen_spec;
    gen_spec.variant = models::Variant::Gen1ch;
    gen_spec.width_scale = width_scale;
    gen_spec.latent_dim = cfg.latent_dim;
    gen_spec.scheme = scheme;
    models::ModelSpec disc_spec = gen_spec;
    disc_spec.variant = models::Variant::Disc1ch;

    Rng build_rng(cfg.seed);
    auto gen = models::build_generator(gen_spec, build_rng);
    auto disc = models::build_discriminator(disc_spec, build_rng);

    ToyRunResult result;
    result.scheme = scheme;
    result.seed = cfg.seed;
    result.state = training::train(gen, disc, toy, cfg);

    const auto generated = training::generate_samples(gen, n_eval, cfg.seed + 0x9e3779b9ULL, 1);
    std::vector<std::vector<double>> signals;
    signals.reserve(static_cast<std::size_t>(generated.n()));
    for (std::int64_t i = 0; i < generated.n(); ++i) {
        signals.push_back(generated.epoch(i));
    }
    result.avg_waveform = eval::averaged_waveform(signals);
    result.dominant_bin = eval::dominant_bin(result.avg_waveform);
    result.amplitude = eval::fitted_amplitude(result.avg_waveform, signal_bin);
    result.artifact_ratio = eval::spectral_artifact_ratio({result.avg_waveform}, {signal_bin});
    return result;
}

std::vector<ToyRunResult> compare_upsampling(const data::EpochDataset& toy,
                                             const std::vector<models::UpsampleScheme>& schemes,
                                             const std::vector<std::uint64_t>& seeds,
                                             const training::TrainConfig& base, double width_scale,
                                             int signal_bin, std::int64_t n_eval, int threads) {
    struct Job {
        models::UpsampleScheme scheme;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto scheme : schemes) {
        for (const auto seed : seeds) {
            jobs.push_back({scheme, seed});
        }
    }
    std::vector<ToyRunResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) {
                return;
            }
            training::TrainConfig cfg = base;
            cfg.seed = jobs[i].seed;
            results[i] =
                run_toy_training(toy, cfg, jobs[i].scheme, width_scale, signal_bin, n_eval);
        }
    };
    const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    return results;
}

int worker_threads(std::size_t jobs) {
    int cap = 0;
    if (const char* env = std::getenv("WAVEFORGE_THREADS")) {
        cap = std::atoi(env);
    }
    if (cap <= 0) {
        cap = static_cast<int>(std::thread::hardware_concurrency());
    }
    if (cap <= 0) {
        cap = 1;
    }
    return std::max(1, std::min<int>(cap, static_cast<int>(jobs)));
}

} // namespace experiments
} // namespace waveforge
