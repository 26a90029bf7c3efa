#pragma once

#include "dtn/nn/tensor.hpp"

namespace dtn::nn {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Unfolds a batch x ((c*h*w) x N) into a (c*k*k) x (N*out_h*out_w) patch
// matrix. Row index: c*k*k + ki*k + kj. Column index: n*out_h*out_w + p
// with p = oi*out_w + oj. Out-of-image taps read as zero.
template <typename Scalar>
void im2col(const Mat<Scalar>& x, const TensorShape& s, int k, int stride, int pad,
            Mat<Scalar>& cols) {
    const int oh = conv_out_dim(s.h, k, stride, pad);
    const int ow = conv_out_dim(s.w, k, stride, pad);
    const int n = static_cast<int>(x.cols());
    const int hw = s.h * s.w;
    cols.resize(s.c * k * k, static_cast<Eigen::Index>(n) * oh * ow);
    for (int b = 0; b < n; ++b) {
        const Scalar* src = x.col(b).data();
        for (int oi = 0; oi < oh; ++oi) {
            for (int oj = 0; oj < ow; ++oj) {
                const Eigen::Index col = static_cast<Eigen::Index>(b) * oh * ow + oi * ow + oj;
                Scalar* dst = cols.col(col).data();
                for (int c = 0; c < s.c; ++c) {
                    for (int ki = 0; ki < k; ++ki) {
                        const int i = oi * stride + ki - pad;
                        for (int kj = 0; kj < k; ++kj) {
                            const int j = oj * stride + kj - pad;
                            const bool in_range = (i >= 0 && i < s.h && j >= 0 && j < s.w);
                            dst[(c * k + ki) * k + kj] =
                                in_range ? src[c * hw + i * s.w + j] : Scalar(0);
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds patch columns back onto the image grid.
template <typename Scalar>
void col2im(const Mat<Scalar>& cols, const TensorShape& s, int k, int stride, int pad,
            Mat<Scalar>& x) {
    const int oh = conv_out_dim(s.h, k, stride, pad);
    const int ow = conv_out_dim(s.w, k, stride, pad);
    const int n = static_cast<int>(cols.cols() / (static_cast<Eigen::Index>(oh) * ow));
    const int hw = s.h * s.w;
    x.setZero(s.size(), n);
    for (int b = 0; b < n; ++b) {
        Scalar* dst = x.col(b).data();
        for (int oi = 0; oi < oh; ++oi) {
            for (int oj = 0; oj < ow; ++oj) {
                const Eigen::Index col = static_cast<Eigen::Index>(b) * oh * ow + oi * ow + oj;
                const Scalar* src = cols.col(col).data();
                for (int c = 0; c < s.c; ++c) {
                    for (int ki = 0; ki < k; ++ki) {
                        const int i = oi * stride + ki - pad;
                        if (i < 0 || i >= s.h) continue;
                        for (int kj = 0; kj < k; ++kj) {
                            const int j = oj * stride + kj - pad;
                            if (j < 0 || j >= s.w) continue;
                            dst[c * hw + i * s.w + j] += src[(c * k + ki) * k + kj];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace dtn::nn
