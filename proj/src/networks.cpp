#include "dtn/networks.hpp"

namespace dtn::net {

using nn::BatchNorm2d;
using nn::Conv2d;
using nn::ConvTranspose2d;
using nn::Linear;
using nn::MaxPool2d;
using nn::ReLU;
using nn::Softmax;
using nn::Tanh;

void build_feature_trunk(nn::Sequential<float>& seq, std::mt19937_64& rng) {
    seq.add<Conv2d<float>>(64, 3, 1, 1, rng);
    seq.add<MaxPool2d<float>>(2);
    seq.add<ReLU<float>>();
    seq.add<Conv2d<float>>(128, 3, 1, 1, rng);
    seq.add<MaxPool2d<float>>(2);
    seq.add<ReLU<float>>();
    seq.add<Conv2d<float>>(256, 3, 1, 1, rng);
    seq.add<MaxPool2d<float>>(2);
    seq.add<ReLU<float>>();
    seq.add<Conv2d<float>>(128, 3, 1, 1, rng);
    seq.add<MaxPool2d<float>>(4);  // 4x4 -> 1x1: the 128-D representation
}

FeatureNetwork::FeatureNetwork(uint64_t seed)
    : trunk_({3, kImageSize, kImageSize}), head_({kFeatureDim, 1, 1}) {
    std::mt19937_64 rng(seed);
    build_feature_trunk(trunk_, rng);
    head_.add<ReLU<float>>();
    head_.add<Linear<float>>(kNumDigits, rng);
    head_.add<Softmax<float>>();
}

MatF FeatureNetwork::features(const MatF& batch, bool train) {
    if (batch.rows() != trunk_.in_shape().size())
        throw UsageError("FeatureNetwork: input must be 3x32x32");
    return trunk_.forward(batch, train);
}

MatF FeatureNetwork::classify(const MatF& batch, bool train) {
    return head_.forward(features(batch, train), train);
}

void FeatureNetwork::backward_classify(const MatF& dprobs) {
    trunk_.backward(head_.backward(dprobs));
}

MatF FeatureNetwork::backward_features(const MatF& dfeatures) {
    return trunk_.backward(dfeatures);
}

std::vector<TensorRefF> FeatureNetwork::tensors() {
    auto out = trunk_.tensors("trunk");
    auto h = head_.tensors("head");
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

void FeatureNetwork::zero_grad() {
    trunk_.zero_grad();
    head_.zero_grad();
}

GeneratorHead::GeneratorHead(uint64_t seed, int out_channels)
    : out_channels_(out_channels), body_({kFeatureDim, 1, 1}) {
    std::mt19937_64 rng(seed);
    body_.add<ConvTranspose2d<float>>(512, 4, 1, 0, rng);  // 1 -> 4
    body_.add<BatchNorm2d<float>>();
    body_.add<ReLU<float>>();
    body_.add<ConvTranspose2d<float>>(256, 4, 2, 1, rng);  // 4 -> 8
    body_.add<BatchNorm2d<float>>();
    body_.add<ReLU<float>>();
    body_.add<ConvTranspose2d<float>>(128, 4, 2, 1, rng);  // 8 -> 16
    body_.add<BatchNorm2d<float>>();
    body_.add<ReLU<float>>();
    body_.add<ConvTranspose2d<float>>(64, 4, 2, 1, rng);  // 16 -> 32
    body_.add<BatchNorm2d<float>>();
    body_.add<ReLU<float>>();
    body_.add<Conv2d<float>>(out_channels, 3, 1, 1, rng);
    body_.add<Tanh<float>>();
}

MatF GeneratorHead::generate(const MatF& features, bool train) {
    if (features.rows() != kFeatureDim)
        throw UsageError("GeneratorHead: feature vectors must be 128-D");
    return body_.forward(features, train);
}

MatF GeneratorHead::backward(const MatF& dimage) { return body_.backward(dimage); }

std::vector<TensorRefF> GeneratorHead::tensors() { return body_.tensors("g"); }
void GeneratorHead::zero_grad() { body_.zero_grad(); }

Discriminator::Discriminator(uint64_t seed, int num_classes, int in_channels)
    : num_classes_(num_classes), body_({in_channels, kImageSize, kImageSize}) {
    std::mt19937_64 rng(seed);
    for (int width : {64, 128, 256, 512}) {
        body_.add<Conv2d<float>>(width, 4, 2, 1, rng);
        body_.add<BatchNorm2d<float>>();
        body_.add<ReLU<float>>();
    }
    body_.add<Linear<float>>(num_classes, rng);
    body_.add<Softmax<float>>();
}

MatF Discriminator::discriminate(const MatF& batch, bool train) {
    if (batch.rows() != body_.in_shape().size())
        throw UsageError("Discriminator: input shape mismatch");
    return body_.forward(batch, train);
}

MatF Discriminator::backward(const MatF& dprobs) { return body_.backward(dprobs); }

std::vector<TensorRefF> Discriminator::tensors() { return body_.tensors("d"); }
void Discriminator::zero_grad() { body_.zero_grad(); }

BaselineGenerator::BaselineGenerator(uint64_t seed, int out_channels)
    : encoder_({3, kImageSize, kImageSize}), head_(seed + 1, out_channels) {
    std::mt19937_64 rng(seed);
    build_feature_trunk(encoder_, rng);
}

MatF BaselineGenerator::encode(const MatF& batch, bool train) {
    if (batch.rows() != encoder_.in_shape().size())
        throw UsageError("BaselineGenerator: input must be 3x32x32");
    return encoder_.forward(batch, train);
}

MatF BaselineGenerator::generate(const MatF& batch, bool train) {
    return head_.generate(encode(batch, train), train);
}

MatF BaselineGenerator::backward(const MatF& dimage) {
    return encoder_.backward(head_.backward(dimage));
}

std::vector<TensorRefF> BaselineGenerator::tensors() {
    auto out = encoder_.tensors("enc");
    auto h = head_.tensors();
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

void BaselineGenerator::zero_grad() {
    encoder_.zero_grad();
    head_.zero_grad();
}

MatF transfer(FeatureNetwork& f, GeneratorHead& g, const MatF& batch) {
    return g.generate(f.features(batch, false), false);
}

}  // namespace dtn::net
