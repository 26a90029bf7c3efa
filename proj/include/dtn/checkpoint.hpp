#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dtn/nn/layers.hpp"

namespace dtn::ckpt {

// Flat float32 tensor blob. Round trips are bitwise: a reloaded network
// reproduces pre-save inference outputs exactly.
void save_tensors(const std::filesystem::path& file,
                  const std::vector<nn::TensorRef<float>>& tensors);
void load_tensors(const std::filesystem::path& file, std::vector<nn::TensorRef<float>> tensors);

// Sidecar manifest: architecture id, step count, seed, config hash.
struct CheckpointManifest {
    std::string architecture;
    int64_t step = 0;
    uint64_t seed = 0;
    std::string config_hash;
};

void save_manifest(const std::filesystem::path& file, const CheckpointManifest& m);
CheckpointManifest load_manifest(const std::filesystem::path& file);

}  // namespace dtn::ckpt
