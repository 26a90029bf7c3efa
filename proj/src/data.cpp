#include "dtn/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dtn::data {

float to_unit_range(uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

uint8_t from_unit_range(float v) {
    const float x = std::clamp((v + 1.0f) * 127.5f, 0.0f, 255.0f);
    return static_cast<uint8_t>(std::lround(x));
}

bool DatasetSplit::labeled() const {
    return !labels_.empty() &&
           std::all_of(labels_.begin(), labels_.end(), [](int8_t l) { return l >= 0; });
}

ImageSample DatasetSplit::sample(size_t i) const {
    ImageSample s;
    s.shape = shape_;
    s.pixels.resize(shape_.size());
    const uint8_t* p = raw(i);
    for (int k = 0; k < shape_.size(); ++k) s.pixels[k] = to_unit_range(p[k]);
    s.label = labels_[i];
    s.domain = domain_;
    return s;
}

nn::MatF DatasetSplit::batch(const std::vector<int>& indices) const {
    nn::MatF out(shape_.size(), static_cast<Eigen::Index>(indices.size()));
    for (size_t b = 0; b < indices.size(); ++b) {
        const uint8_t* p = raw(indices[b]);
        float* dst = out.col(b).data();
        for (int k = 0; k < shape_.size(); ++k) dst[k] = to_unit_range(p[k]);
    }
    return out;
}

std::vector<int> DatasetSplit::batch_labels(const std::vector<int>& indices) const {
    std::vector<int> out(indices.size());
    for (size_t b = 0; b < indices.size(); ++b) out[b] = labels_[indices[b]];
    return out;
}

DatasetSplit DatasetSplit::subsample(size_t n, uint64_t seed) const {
    n = std::min(n, size());
    std::vector<int> idx(size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    DatasetSplit out(name_ + "-sub" + std::to_string(n), shape_, domain_);
    out.set_source_checksum(checksum_);
    out.reserve(n);
    for (int i : idx) out.push_back(raw(i), labels_[i]);
    return out;
}

ImageSample replicate_channels(const ImageSample& x) {
    if (x.shape.c != 1) throw UsageError("replicate_channels: input must have one channel");
    ImageSample out;
    out.shape = {3, x.shape.h, x.shape.w};
    out.pixels.resize(out.shape.size());
    const int hw = x.shape.h * x.shape.w;
    for (int c = 0; c < 3; ++c) out.pixels.segment(c * hw, hw) = x.pixels;
    out.label = x.label;
    out.domain = x.domain;
    return out;
}

nn::MatF replicate_channels(const nn::MatF& batch, const nn::TensorShape& shape) {
    if (shape.c != 1) throw UsageError("replicate_channels: input must have one channel");
    const int hw = shape.h * shape.w;
    nn::MatF out(3 * hw, batch.cols());
    for (int c = 0; c < 3; ++c) out.middleRows(c * hw, hw) = batch;
    return out;
}

DatasetSplit apply_omission(const DatasetSplit& split, int digit) {
    if (digit < 0 || digit > 9) throw UsageError("apply_omission: digit must be in 0..9");
    if (!split.labeled()) throw UsageError("apply_omission: split must be labeled");
    DatasetSplit out(split.name() + "-omit" + std::to_string(digit), split.shape(),
                     split.domain());
    out.set_source_checksum(split.source_checksum());
    for (size_t i = 0; i < split.size(); ++i)
        if (split.label(i) != digit) out.push_back(split.raw(i), split.label(i));
    return out;
}

BatchStream::BatchStream(size_t split_size, int batch_size, uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
    if (split_size == 0) throw UsageError("BatchStream: empty split");
    if (batch_size < 1) throw UsageError("BatchStream: batch_size must be >= 1");
    order_.resize(split_size);
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
}

void BatchStream::reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
    ++epoch_;
}

std::vector<int> BatchStream::next() {
    if (cursor_ >= order_.size()) reshuffle();
    const size_t take = std::min<size_t>(batch_size_, order_.size() - cursor_);
    std::vector<int> out(order_.begin() + cursor_, order_.begin() + cursor_ + take);
    cursor_ += take;
    return out;
}

void resize_bilinear(const float* src, int sh, int sw, float* dst, int dh, int dw) {
    const float sy = static_cast<float>(sh) / dh;
    const float sx = static_cast<float>(sw) / dw;
    for (int i = 0; i < dh; ++i) {
        // Pixel-center alignment.
        const float fy = std::max(0.0f, (i + 0.5f) * sy - 0.5f);
        const int y0 = std::min(static_cast<int>(fy), sh - 1);
        const int y1 = std::min(y0 + 1, sh - 1);
        const float wy = fy - y0;
        for (int j = 0; j < dw; ++j) {
            const float fx = std::max(0.0f, (j + 0.5f) * sx - 0.5f);
            const int x0 = std::min(static_cast<int>(fx), sw - 1);
            const int x1 = std::min(x0 + 1, sw - 1);
            const float wx = fx - x0;
            const float top = src[y0 * sw + x0] * (1 - wx) + src[y0 * sw + x1] * wx;
            const float bot = src[y1 * sw + x0] * (1 - wx) + src[y1 * sw + x1] * wx;
            dst[i * dw + j] = top * (1 - wy) + bot * wy;
        }
    }
}

}  // namespace dtn::data
