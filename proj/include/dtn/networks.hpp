#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtn/errors.hpp"
#include "dtn/nn/sequential.hpp"

namespace dtn::net {

using nn::MatF;
using nn::TensorShape;
using TensorRefF = nn::TensorRef<float>;

constexpr int kImageSize = 32;
constexpr int kFeatureDim = 128;
constexpr int kNumDigits = 10;

// Convolutional digit network: four conv+maxpool+ReLU blocks with
// 64/128/256/128 filters. The 128-D representation is taken after the
// final 4x4 max pooling and before the terminal ReLU; the classifier head
// appends ReLU -> linear -> softmax.
class FeatureNetwork {
public:
    explicit FeatureNetwork(uint64_t seed);

    MatF features(const MatF& batch, bool train = false);
    MatF classify(const MatF& batch, bool train = false);

    // Backward passes assume the matching forward ran last on this object.
    void backward_classify(const MatF& dprobs);
    MatF backward_features(const MatF& dfeatures);

    std::vector<TensorRefF> tensors();
    void zero_grad();

private:
    nn::Sequential<float> trunk_;
    nn::Sequential<float> head_;
};

// Maps a 128-D representation to an image through four
// deconvolution+batchnorm+ReLU blocks (512/256/128/64) and a 1-channel
// (or 3-channel, in the reverse direction) convolution with tanh.
class GeneratorHead {
public:
    GeneratorHead(uint64_t seed, int out_channels = 1);

    MatF generate(const MatF& features, bool train = false);
    MatF backward(const MatF& dimage);

    int out_channels() const { return out_channels_; }
    TensorShape out_shape() const { return body_.out_shape(); }
    std::vector<TensorRefF> tensors();
    void zero_grad();

private:
    int out_channels_;
    nn::Sequential<float> body_;
};

// Four batch-normalized stride-2 convolutions (64/128/256/512) and a
// linear softmax head; ternary in the full model, binary in baseline mode.
class Discriminator {
public:
    Discriminator(uint64_t seed, int num_classes = 3, int in_channels = 1);

    MatF discriminate(const MatF& batch, bool train = false);
    MatF backward(const MatF& dprobs);

    int num_classes() const { return num_classes_; }
    std::vector<TensorRefF> tensors();
    void zero_grad();

private:
    int num_classes_;
    nn::Sequential<float> body_;
};

// Target-domain digit classifier with the same architecture as f.
class EvalClassifier {
public:
    explicit EvalClassifier(uint64_t seed) : net_(seed) {}
    MatF classify(const MatF& batch, bool train = false) { return net_.classify(batch, train); }
    void backward(const MatF& dprobs) { net_.backward_classify(dprobs); }
    std::vector<TensorRefF> tensors() { return net_.tensors(); }
    void zero_grad() { net_.zero_grad(); }

private:
    FeatureNetwork net_;
};

// Direct pixel-to-pixel generator for the two-term baseline: a fresh,
// jointly trained copy of f's conv stack feeding the generator head.
// Shares no parameters with any pretrained network.
class BaselineGenerator {
public:
    explicit BaselineGenerator(uint64_t seed, int out_channels = 1);

    MatF generate(const MatF& batch, bool train = false);
    MatF backward(const MatF& dimage);
    // Encoder output for the last forward pass (used by the no-f ablation).
    MatF encode(const MatF& batch, bool train = false);

    std::vector<TensorRefF> tensors();
    void zero_grad();

    GeneratorHead& head() { return head_; }

private:
    nn::Sequential<float> encoder_;
    GeneratorHead head_;
};

// G = g(f(x)) in inference mode. f's parameters are never touched.
MatF transfer(FeatureNetwork& f, GeneratorHead& g, const MatF& batch);

// Builds f's conv trunk; shared by FeatureNetwork and BaselineGenerator.
void build_feature_trunk(nn::Sequential<float>& seq, std::mt19937_64& rng);

}  // namespace dtn::net
