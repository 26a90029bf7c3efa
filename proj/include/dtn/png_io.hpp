#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dtn::png {

struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;               // 1 or 3
    std::vector<uint8_t> pixels;    // row-major, interleaved channels
};

void write(const std::filesystem::path& file, const Image& img);
Image read(const std::filesystem::path& file);

}  // namespace dtn::png
