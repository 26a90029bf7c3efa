#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dtn::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;

// Shape of one sample within a batch matrix. A batch of N samples is stored
// as a (c*h*w) x N column-major matrix, one sample per column, with flat
// index c*(h*w) + i*w + j (channel-major, rows before columns).
struct TensorShape {
    int c = 0;
    int h = 0;
    int w = 0;

    int size() const { return c * h * w; }
    bool operator==(const TensorShape&) const = default;
    std::string str() const {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline void require_shape(const TensorShape& got, const TensorShape& want, const char* where) {
    if (!(got == want))
        throw ShapeError(std::string(where) + ": expected " + want.str() + ", got " + got.str());
}

}  // namespace dtn::nn
