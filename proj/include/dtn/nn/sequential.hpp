#pragma once

#include <memory>
#include <vector>

#include "dtn/nn/layers.hpp"

namespace dtn::nn {

template <typename Scalar>
class Sequential {
public:
    Sequential() = default;
    explicit Sequential(TensorShape in) : in_(in) {}

    template <typename L, typename... Args>
    L& add(Args&&... args) {
        const TensorShape in = layers_.empty() ? in_ : layers_.back()->out_shape();
        auto layer = std::make_unique<L>(in, std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Mat<Scalar> forward(Mat<Scalar> x, bool train) {
        for (auto& l : layers_) x = l->forward(x, train);
        return x;
    }

    Mat<Scalar> backward(Mat<Scalar> dy) {
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dy = (*it)->backward(dy);
        return dy;
    }

    std::vector<TensorRef<Scalar>> tensors(const std::string& prefix) {
        std::vector<TensorRef<Scalar>> out;
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect(prefix + "." + std::to_string(i), out);
        return out;
    }

    void zero_grad() {
        for (auto& t : tensors(""))
            if (t.grad) t.grad->setZero();
    }

    TensorShape in_shape() const { return in_; }
    TensorShape out_shape() const {
        return layers_.empty() ? in_ : layers_.back()->out_shape();
    }
    size_t size() const { return layers_.size(); }
    Layer<Scalar>& operator[](size_t i) { return *layers_[i]; }

private:
    TensorShape in_;
    std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

}  // namespace dtn::nn
