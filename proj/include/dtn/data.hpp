#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dtn/errors.hpp"
#include "dtn/nn/tensor.hpp"

namespace dtn::data {

enum class Domain { SOURCE, TARGET };

// A single image materialized as normalized floats in [-1, 1].
struct ImageSample {
    nn::TensorShape shape;
    Eigen::VectorXf pixels;  // c*h*w, channel-major
    int label = -1;          // -1 = unlabeled
    Domain domain = Domain::SOURCE;
};

// An ordered, immutable collection of equally shaped images. Pixels are
// held as uint8 and normalized on access; the SVHN extra split would not
// fit in memory as floats.
class DatasetSplit {
public:
    DatasetSplit() = default;
    DatasetSplit(std::string name, nn::TensorShape shape, Domain domain)
        : name_(std::move(name)), shape_(shape), domain_(domain) {}

    void reserve(size_t n) {
        pixels_.reserve(n * shape_.size());
        labels_.reserve(n);
    }
    void push_back(const uint8_t* pixels, int label) {
        pixels_.insert(pixels_.end(), pixels, pixels + shape_.size());
        labels_.push_back(static_cast<int8_t>(label));
    }

    size_t size() const { return labels_.size(); }
    const nn::TensorShape& shape() const { return shape_; }
    const std::string& name() const { return name_; }
    Domain domain() const { return domain_; }
    const std::string& source_checksum() const { return checksum_; }
    void set_source_checksum(std::string c) { checksum_ = std::move(c); }

    int label(size_t i) const { return labels_[i]; }
    bool labeled() const;
    const uint8_t* raw(size_t i) const { return pixels_.data() + i * shape_.size(); }

    ImageSample sample(size_t i) const;

    // Assembles the given samples into a (c*h*w) x n batch of [-1, 1] floats.
    nn::MatF batch(const std::vector<int>& indices) const;
    std::vector<int> batch_labels(const std::vector<int>& indices) const;

    // Deterministic subsample: seeded shuffle, first n survive, original
    // relative order restored.
    DatasetSplit subsample(size_t n, uint64_t seed) const;

private:
    std::string name_;
    nn::TensorShape shape_;
    Domain domain_ = Domain::SOURCE;
    std::string checksum_;
    std::vector<uint8_t> pixels_;
    std::vector<int8_t> labels_;
};

struct ClassOmissionFilter {
    std::optional<int> omit_from_s;
    std::optional<int> omit_from_t;
    std::optional<int> omit_from_f_training;
};

ImageSample replicate_channels(const ImageSample& x);
// Batch variant: stacks the single channel three times.
nn::MatF replicate_channels(const nn::MatF& batch, const nn::TensorShape& shape);

DatasetSplit apply_omission(const DatasetSplit& split, int digit);

float to_unit_range(uint8_t v);
uint8_t from_unit_range(float v);

// Seeded epoch-permutation batch stream. The final short batch of an epoch
// is kept. Two streams built from identical (size, batch_size, seed) yield
// identical index sequences.
class BatchStream {
public:
    BatchStream(size_t split_size, int batch_size, uint64_t seed);
    std::vector<int> next();
    int64_t epoch() const { return epoch_; }

private:
    void reshuffle();
    std::vector<int> order_;
    size_t cursor_ = 0;
    int batch_size_;
    int64_t epoch_ = -1;
    std::mt19937_64 rng_;
};

enum class SvhnSplit { EXTRA, TEST };
enum class MnistSplit { TRAIN, TEST };

struct FetchOptions {
    std::filesystem::path cache_dir;
    // Override the canonical download locations (used by tests and by
    // mirror-only environments). Empty means the default URL.
    std::string svhn_base_url;
    std::string mnist_base_url;
    bool offline = false;  // fail instead of touching the network
};

struct FetchResult {
    DatasetSplit split;
    bool from_cache = false;
};

FetchResult fetch_svhn(SvhnSplit split, const FetchOptions& opt);
FetchResult fetch_mnist(MnistSplit split, const FetchOptions& opt);

// Decoders, exposed for tests. Both throw CorruptionError on bad bytes.
DatasetSplit decode_svhn_mat(const std::vector<uint8_t>& bytes, const std::string& name,
                             Domain domain);
DatasetSplit decode_mnist_idx(const std::vector<uint8_t>& images_gz,
                              const std::vector<uint8_t>& labels_gz, const std::string& name,
                              Domain domain);

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> gzip_compress(const std::vector<uint8_t>& bytes);
std::string sha256_hex(const uint8_t* data, size_t len);
std::string sha256_hex(const std::vector<uint8_t>& bytes);

// Bilinear resample of one channel plane, float in, float out.
void resize_bilinear(const float* src, int sh, int sw, float* dst, int dh, int dw);

std::vector<uint8_t> http_get(const std::string& url);

}  // namespace dtn::data
