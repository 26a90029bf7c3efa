#include <cstring>

#include "dtn/data.hpp"

namespace dtn::data {
namespace {

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

}  // namespace

DatasetSplit decode_mnist_idx(const std::vector<uint8_t>& images_gz,
                              const std::vector<uint8_t>& labels_gz, const std::string& name,
                              Domain domain) {
    const std::vector<uint8_t> img = gunzip(images_gz);
    const std::vector<uint8_t> lab = gunzip(labels_gz);
    if (img.size() < 16 || read_be32(img.data()) != 0x00000803)
        throw CorruptionError("idx: bad image magic");
    if (lab.size() < 8 || read_be32(lab.data()) != 0x00000801)
        throw CorruptionError("idx: bad label magic");
    const uint32_t n = read_be32(img.data() + 4);
    const uint32_t rows = read_be32(img.data() + 8);
    const uint32_t cols = read_be32(img.data() + 12);
    if (read_be32(lab.data() + 4) != n) throw CorruptionError("idx: image/label count mismatch");
    if (img.size() != 16 + size_t(n) * rows * cols)
        throw CorruptionError("idx: truncated image payload");
    if (lab.size() != 8 + size_t(n)) throw CorruptionError("idx: truncated label payload");

    // Decode native grayscale and bring it to the 32x32 canvas the
    // networks use, by bilinear resampling.
    const int out_hw = 32;
    DatasetSplit split(name, {1, out_hw, out_hw}, domain);
    split.reserve(n);
    std::vector<float> src(rows * cols), dst(out_hw * out_hw);
    std::vector<uint8_t> px(out_hw * out_hw);
    for (uint32_t i = 0; i < n; ++i) {
        const uint8_t* p = img.data() + 16 + size_t(i) * rows * cols;
        for (uint32_t k = 0; k < rows * cols; ++k) src[k] = static_cast<float>(p[k]);
        resize_bilinear(src.data(), rows, cols, dst.data(), out_hw, out_hw);
        for (int k = 0; k < out_hw * out_hw; ++k)
            px[k] = static_cast<uint8_t>(std::lround(std::clamp(dst[k], 0.0f, 255.0f)));
        const int label = lab[8 + i];
        if (label > 9) throw CorruptionError("idx: label out of range");
        split.push_back(px.data(), label);
    }
    return split;
}

}  // namespace dtn::data
