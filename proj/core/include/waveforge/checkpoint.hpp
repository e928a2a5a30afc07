#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "waveforge/tensor.hpp"

namespace waveforge {

struct NamedParam;

namespace ckpt {

// Flat binary parameter file: magic "WFTS", one version byte, then per
// parameter (name length u64, name bytes, rank u64, dims u64 each, data as
// 32-bit floats), everything little-endian.
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedParam>& params);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::filesystem::path& path);

// Copies loaded values into matching parameters; every loaded name must
// resolve and every shape must agree, otherwise the model spec does not
// match the checkpoint.
void apply_checkpoint(const std::vector<std::pair<std::string, Tensor>>& loaded,
                      std::vector<NamedParam>& params);

} // namespace ckpt
} // namespace waveforge
