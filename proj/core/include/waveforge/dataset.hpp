#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "waveforge/tensor.hpp"

namespace waveforge {
namespace data {

// Fixed-length signal epochs, single- or 64-channel, with optional binary
// labels (0 = non-target, 1 = target).
struct EpochDataset {
    Tensor samples; // [N, C, T]
    std::optional<std::vector<std::uint8_t>> labels;
    std::int64_t sample_rate = 64;
    std::string metadata;

    std::int64_t n() const { return samples.shape()[0]; }
    std::int64_t channels() const { return samples.shape()[1]; }
    std::int64_t length() const { return samples.shape()[2]; }

    // Epoch `i` flattened channel-major (C * T values).
    std::vector<double> epoch(std::int64_t i) const;
};

void validate(const EpochDataset& ds);

enum class PhaseMode { Random, Fixed };

// Noisy sinusoid epochs: amplitude * sin(2*pi*f*t/rate + phase) + N(0, var).
// Random mode draws one phase per epoch; fixed mode uses `fixed_phase`
// everywhere (the averaged waveform then keeps the full amplitude).
EpochDataset gen_sinusoid_toy(std::int64_t n, double freq_hz, double amplitude, double noise_var,
                              std::uint64_t seed, PhaseMode phase = PhaseMode::Random,
                              double fixed_phase = 0.0);

// Labeled surrogate of an event-classification recording: every epoch carries
// a 5 Hz background oscillation plus noise; target epochs add a positive bump
// centred at 300 ms. For 64 channels the bump appears only on a designated
// "occipital" channel block. Epochs are z-scored.
EpochDataset gen_erp_surrogate(std::int64_t n_per_class, std::int64_t channels,
                               std::uint64_t seed);

// Channels the 64-channel surrogate places the event bump on.
std::pair<std::int64_t, std::int64_t> erp_occipital_range(); // [first, last)

// (x - mean) / std over the whole epoch; error on zero variance.
std::vector<double> zscore_epoch(const std::vector<double>& epoch);

void save_dataset(const std::filesystem::path& path, const EpochDataset& ds);
EpochDataset load_dataset(const std::filesystem::path& path);

// One row per epoch, channel-major values; labeled sets get a label column.
void export_csv(const std::filesystem::path& path, const EpochDataset& ds);

} // namespace data
} // namespace waveforge
