#pragma once

#include <cstdint>
#include <vector>

#include "waveforge/training.hpp"

namespace waveforge {
namespace experiments {

// Outcome of one toy-signal training run: spectral summary of the averaged
// generated waveform.
struct ToyRunResult {
    models::UpsampleScheme scheme = models::UpsampleScheme::BC_DCBL;
    std::uint64_t seed = 0;
    int dominant_bin = 0;
    double amplitude = 0.0;      // sinusoid fit at the signal bin
    double artifact_ratio = 0.0; // off-band energy of the averaged waveform
    std::vector<double> avg_waveform;
    training::TrainState state;
};

// Trains generator + critic on the toy set with the given scheme and
// cfg.seed, then evaluates n_eval generated samples.
ToyRunResult run_toy_training(const data::EpochDataset& toy, const training::TrainConfig& cfg,
                              models::UpsampleScheme scheme, double width_scale, int signal_bin,
                              std::int64_t n_eval);

// Runs every (scheme, seed) combination under one shared budget; jobs are
// independent training contexts, so they may run on worker threads without
// changing any result. Output order is (scheme, seed) in the given order.
std::vector<ToyRunResult> compare_upsampling(const data::EpochDataset& toy,
                                             const std::vector<models::UpsampleScheme>& schemes,
                                             const std::vector<std::uint64_t>& seeds,
                                             const training::TrainConfig& base, double width_scale,
                                             int signal_bin, std::int64_t n_eval, int threads);

// Worker cap: WAVEFORGE_THREADS when set, else hardware concurrency, never
// more than `jobs`.
int worker_threads(std::size_t jobs);

} // namespace experiments
} // namespace waveforge
