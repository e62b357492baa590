#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

namespace urbansolar {

/// Binary layout: "SGCK", u32 LE header length, JSON header, then every tensor
/// as contiguous little-endian float32 in header order. The header lists
/// name, shape and float offset of each tensor plus caller metadata
/// (kind, architecture, config, seed, fingerprints).
struct Checkpoint {
    nlohmann::json header;
    std::vector<std::pair<std::string, torch::Tensor>> tensors;

    /// SHA-256 over the tensor payload.
    std::string fingerprint() const;
};

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module);
/// Copies values into the module; throws CorruptionError on missing names or
/// shape mismatches.
void load_state(torch::nn::Module& module, const std::vector<std::pair<std::string, torch::Tensor>>& state);

std::string state_fingerprint(const torch::nn::Module& module);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws CorruptionError on a bad magic, truncated payload or malformed header.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace urbansolar
