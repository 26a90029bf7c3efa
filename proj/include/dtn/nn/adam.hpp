#pragma once

#include <cmath>
#include <vector>

#include "dtn/nn/layers.hpp"

namespace dtn::nn {

template <typename Scalar>
struct AdamConfig {
    Scalar lr = Scalar(2e-4);
    Scalar beta1 = Scalar(0.5);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
};

template <typename Scalar>
class Adam {
public:
    Adam(std::vector<TensorRef<Scalar>> params, AdamConfig<Scalar> cfg)
        : cfg_(cfg) {
        for (auto& p : params) {
            if (!p.trainable || !p.grad) continue;
            slots_.push_back({p.value, p.grad, Mat<Scalar>::Zero(p.value->rows(), p.value->cols()),
                              Mat<Scalar>::Zero(p.value->rows(), p.value->cols())});
        }
    }

    void step() {
        ++t_;
        const Scalar bc1 = Scalar(1) - std::pow(cfg_.beta1, Scalar(t_));
        const Scalar bc2 = Scalar(1) - std::pow(cfg_.beta2, Scalar(t_));
        for (auto& s : slots_) {
            s.m = cfg_.beta1 * s.m + (Scalar(1) - cfg_.beta1) * (*s.grad);
            s.v = (cfg_.beta2 * s.v.array() +
                   (Scalar(1) - cfg_.beta2) * s.grad->array().square())
                      .matrix();
            s.value->array() -=
                cfg_.lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + cfg_.eps);
        }
    }

    void zero_grad() {
        for (auto& s : slots_) s.grad->setZero();
    }

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }

    // Moment tensors, exposed for checkpoint round trips.
    std::vector<TensorRef<Scalar>> state(const std::string& prefix) {
        std::vector<TensorRef<Scalar>> out;
        for (size_t i = 0; i < slots_.size(); ++i) {
            out.push_back({prefix + ".m" + std::to_string(i), &slots_[i].m, nullptr, false});
            out.push_back({prefix + ".v" + std::to_string(i), &slots_[i].v, nullptr, false});
        }
        return out;
    }

private:
    struct Slot {
        Mat<Scalar>* value;
        Mat<Scalar>* grad;
        Mat<Scalar> m, v;
    };
    AdamConfig<Scalar> cfg_;
    std::vector<Slot> slots_;
    int64_t t_ = 0;
};

}  // namespace dtn::nn
