#pragma once

#include <memory>
#include <random>
#include <vector>

#include "dtn/nn/im2col.hpp"
#include "dtn/nn/tensor.hpp"

namespace dtn::nn {

// Named tensor handle used by optimizers and checkpointing. Buffers
// (running statistics) are saved but never optimized.
template <typename Scalar>
struct TensorRef {
    std::string name;
    Mat<Scalar>* value = nullptr;
    Mat<Scalar>* grad = nullptr;  // null for buffers
    bool trainable = false;
};

template <typename Scalar>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Mat<Scalar> forward(const Mat<Scalar>& x, bool train) = 0;
    virtual Mat<Scalar> backward(const Mat<Scalar>& dy) = 0;
    virtual void collect(const std::string& prefix, std::vector<TensorRef<Scalar>>& out) {}
    virtual TensorShape out_shape() const = 0;
};

template <typename Scalar>
Mat<Scalar> gaussian_init(int rows, int cols, Scalar stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(dist(rng));
    return m;
}

template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
public:
    Conv2d(TensorShape in, int out_channels, int k, int stride, int pad, std::mt19937_64& rng)
        : in_(in), k_(k), stride_(stride), pad_(pad) {
        out_ = {out_channels, conv_out_dim(in.h, k, stride, pad),
                conv_out_dim(in.w, k, stride, pad)};
        weight_ = gaussian_init<Scalar>(out_channels, in.c * k * k, Scalar(0.02), rng);
        bias_ = Mat<Scalar>::Zero(out_channels, 1);
        dweight_ = Mat<Scalar>::Zero(weight_.rows(), weight_.cols());
        dbias_ = Mat<Scalar>::Zero(bias_.rows(), 1);
    }

    Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
        if (x.rows() != in_.size()) throw ShapeError("Conv2d: bad input rows");
        const int n = static_cast<int>(x.cols());
        const int hw = out_.h * out_.w;
        im2col(x, in_, k_, stride_, pad_, cols_);
        Mat<Scalar> y_mat(out_.c, cols_.cols());
        y_mat.noalias() = weight_ * cols_;
        y_mat.colwise() += bias_.col(0);
        Mat<Scalar> y(out_.size(), n);
        for (int b = 0; b < n; ++b)
            for (int co = 0; co < out_.c; ++co)
                y.col(b).segment(co * hw, hw) =
                    y_mat.row(co).segment(static_cast<Eigen::Index>(b) * hw, hw).transpose();
        return y;
    }

    Mat<Scalar> backward(const Mat<Scalar>& dy) override {
        const int n = static_cast<int>(dy.cols());
        const int hw = out_.h * out_.w;
        Mat<Scalar> dy_mat(out_.c, static_cast<Eigen::Index>(n) * hw);
        for (int b = 0; b < n; ++b)
            for (int co = 0; co < out_.c; ++co)
                dy_mat.row(co).segment(static_cast<Eigen::Index>(b) * hw, hw) =
                    dy.col(b).segment(co * hw, hw).transpose();
        dweight_.noalias() += dy_mat * cols_.transpose();
        dbias_.col(0) += dy_mat.rowwise().sum();
        Mat<Scalar> dcols(weight_.cols(), dy_mat.cols());
        dcols.noalias() = weight_.transpose() * dy_mat;
        Mat<Scalar> dx;
        col2im(dcols, in_, k_, stride_, pad_, dx);
        return dx;
    }

    void collect(const std::string& p, std::vector<TensorRef<Scalar>>& out) override {
        out.push_back({p + ".weight", &weight_, &dweight_, true});
        out.push_back({p + ".bias", &bias_, &dbias_, true});
    }

    TensorShape out_shape() const override { return out_; }

private:
    TensorShape in_, out_;
    int k_, stride_, pad_;
    Mat<Scalar> weight_, bias_, dweight_, dbias_, cols_;
};

// Fractionally strided convolution: output (in-1)*stride - 2*pad + k.
template <typename Scalar>
class ConvTranspose2d final : public Layer<Scalar> {
public:
    ConvTranspose2d(TensorShape in, int out_channels, int k, int stride, int pad,
                    std::mt19937_64& rng)
        : in_(in), k_(k), stride_(stride), pad_(pad) {
        out_ = {out_channels, (in.h - 1) * stride - 2 * pad + k, (in.w - 1) * stride - 2 * pad + k};
        weight_ = gaussian_init<Scalar>(in.c, out_channels * k * k, Scalar(0.02), rng);
        bias_ = Mat<Scalar>::Zero(out_channels, 1);
        dweight_ = Mat<Scalar>::Zero(weight_.rows(), weight_.cols());
        dbias_ = Mat<Scalar>::Zero(bias_.rows(), 1);
    }

    Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
        if (x.rows() != in_.size()) throw ShapeError("ConvTranspose2d: bad input rows");
        const int n = static_cast<int>(x.cols());
        const int hw_in = in_.h * in_.w;
        x_mat_.resize(in_.c, static_cast<Eigen::Index>(n) * hw_in);
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < in_.c; ++c)
                x_mat_.row(c).segment(static_cast<Eigen::Index>(b) * hw_in, hw_in) =
                    x.col(b).segment(c * hw_in, hw_in).transpose();
        Mat<Scalar> cols(weight_.cols(), x_mat_.cols());
        cols.noalias() = weight_.transpose() * x_mat_;
        Mat<Scalar> y;
        col2im(cols, out_, k_, stride_, pad_, y);
        const int hw_out = out_.h * out_.w;
        for (int b = 0; b < n; ++b)
            for (int co = 0; co < out_.c; ++co)
                y.col(b).segment(co * hw_out, hw_out).array() += bias_(co, 0);
        return y;
    }

    Mat<Scalar> backward(const Mat<Scalar>& dy) override {
        const int n = static_cast<int>(dy.cols());
        const int hw_out = out_.h * out_.w;
        for (int b = 0; b < n; ++b)
            for (int co = 0; co < out_.c; ++co)
                dbias_(co, 0) += dy.col(b).segment(co * hw_out, hw_out).sum();
        Mat<Scalar> dcols;
        im2col(dy, out_, k_, stride_, pad_, dcols);
        dweight_.noalias() += x_mat_ * dcols.transpose();
        Mat<Scalar> dx_mat(in_.c, dcols.cols());
        dx_mat.noalias() = weight_ * dcols;
        const int hw_in = in_.h * in_.w;
        Mat<Scalar> dx(in_.size(), n);
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < in_.c; ++c)
                dx.col(b).segment(c * hw_in, hw_in) =
                    dx_mat.row(c).segment(static_cast<Eigen::Index>(b) * hw_in, hw_in).transpose();
        return dx;
    }

    void collect(const std::string& p, std::vector<TensorRef<Scalar>>& out) override {
        out.push_back({p + ".weight", &weight_, &dweight_, true});
        out.push_back({p + ".bias", &bias_, &dbias_, true});
    }

    TensorShape out_shape() const override { return out_; }

private:
    TensorShape in_, out_;
    int k_, stride_, pad_;
    Mat<Scalar> weight_, bias_, dweight_, dbias_, x_mat_;
};

template <typename Scalar>
class BatchNorm2d final : public Layer<Scalar> {
public:
    explicit BatchNorm2d(TensorShape in, Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5))
        : in_(in), momentum_(momentum), eps_(eps) {
        gamma_ = Mat<Scalar>::Ones(in.c, 1);
        beta_ = Mat<Scalar>::Zero(in.c, 1);
        dgamma_ = Mat<Scalar>::Zero(in.c, 1);
        dbeta_ = Mat<Scalar>::Zero(in.c, 1);
        running_mean_ = Mat<Scalar>::Zero(in.c, 1);
        running_var_ = Mat<Scalar>::Ones(in.c, 1);
    }

    Mat<Scalar> forward(const Mat<Scalar>& x, bool train) override {
        const int n = static_cast<int>(x.cols());
        const int hw = in_.h * in_.w;
        const Scalar count = static_cast<Scalar>(n) * hw;
        Mat<Scalar> y(x.rows(), n);
        if (train) {
            if (n < 2) throw ShapeError("BatchNorm2d: training mode needs batch size >= 2");
            xhat_.resize(x.rows(), n);
            mean_.resize(in_.c, 1);
            invstd_.resize(in_.c, 1);
            for (int c = 0; c < in_.c; ++c) {
                Scalar mu = 0, var = 0;
                for (int b = 0; b < n; ++b) mu += x.col(b).segment(c * hw, hw).sum();
                mu /= count;
                for (int b = 0; b < n; ++b)
                    var += (x.col(b).segment(c * hw, hw).array() - mu).square().sum();
                var /= count;
                const Scalar inv = Scalar(1) / std::sqrt(var + eps_);
                mean_(c, 0) = mu;
                invstd_(c, 0) = inv;
                running_mean_(c, 0) = (Scalar(1) - momentum_) * running_mean_(c, 0) + momentum_ * mu;
                running_var_(c, 0) = (Scalar(1) - momentum_) * running_var_(c, 0) + momentum_ * var;
                for (int b = 0; b < n; ++b) {
                    auto xs = x.col(b).segment(c * hw, hw).array();
                    xhat_.col(b).segment(c * hw, hw) = ((xs - mu) * inv).matrix();
                    y.col(b).segment(c * hw, hw) =
                        (xhat_.col(b).segment(c * hw, hw).array() * gamma_(c, 0) + beta_(c, 0))
                            .matrix();
                }
            }
        } else {
            for (int c = 0; c < in_.c; ++c) {
                const Scalar inv = Scalar(1) / std::sqrt(running_var_(c, 0) + eps_);
                for (int b = 0; b < n; ++b) {
                    auto xs = x.col(b).segment(c * hw, hw).array();
                    y.col(b).segment(c * hw, hw) =
                        ((xs - running_mean_(c, 0)) * inv * gamma_(c, 0) + beta_(c, 0)).matrix();
                }
            }
        }
        return y;
    }

    Mat<Scalar> backward(const Mat<Scalar>& dy) override {
        const int n = static_cast<int>(dy.cols());
        const int hw = in_.h * in_.w;
        const Scalar count = static_cast<Scalar>(n) * hw;
        Mat<Scalar> dx(dy.rows(), n);
        for (int c = 0; c < in_.c; ++c) {
            Scalar sum_dy = 0, sum_dy_xhat = 0;
            for (int b = 0; b < n; ++b) {
                sum_dy += dy.col(b).segment(c * hw, hw).sum();
                sum_dy_xhat += dy.col(b)
                                   .segment(c * hw, hw)
                                   .cwiseProduct(xhat_.col(b).segment(c * hw, hw))
                                   .sum();
            }
            dgamma_(c, 0) += sum_dy_xhat;
            dbeta_(c, 0) += sum_dy;
            const Scalar scale = gamma_(c, 0) * invstd_(c, 0) / count;
            for (int b = 0; b < n; ++b) {
                auto dys = dy.col(b).segment(c * hw, hw).array();
                auto xhs = xhat_.col(b).segment(c * hw, hw).array();
                dx.col(b).segment(c * hw, hw) =
                    (scale * (count * dys - sum_dy - xhs * sum_dy_xhat)).matrix();
            }
        }
        return dx;
    }

    void collect(const std::string& p, std::vector<TensorRef<Scalar>>& out) override {
        out.push_back({p + ".gamma", &gamma_, &dgamma_, true});
        out.push_back({p + ".beta", &beta_, &dbeta_, true});
        out.push_back({p + ".running_mean", &running_mean_, nullptr, false});
        out.push_back({p + ".running_var", &running_var_, nullptr, false});
    }

    TensorShape out_shape() const override { return in_; }

private:
    TensorShape in_;
    Scalar momentum_, eps_;
    Mat<Scalar> gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_;
    Mat<Scalar> xhat_, mean_, invstd_;
};

template <typename Scalar>
class ReLU final : public Layer<Scalar> {
public:
    explicit ReLU(TensorShape in) : in_(in) {}
    Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
        mask_ = (x.array() > Scalar(0)).template cast<Scalar>();
        return x.cwiseProduct(mask_);
    }
    Mat<Scalar> backward(const Mat<Scalar>& dy) override { return dy.cwiseProduct(mask_); }
    TensorShape out_shape() const override { return in_; }

private:
    TensorShape in_;
    Mat<Scalar> mask_;
};

template <typename Scalar>
class Tanh final : public Layer<Scalar> {
public:
    explicit Tanh(TensorShape in) : in_(in) {}
    Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
        y_ = x.array().tanh().matrix();
        return y_;
    }
    Mat<Scalar> backward(const Mat<Scalar>& dy) override {
        return (dy.array() * (Scalar(1) - y_.array().square())).matrix();
    }
    TensorShape out_shape() const override { return in_; }

private:
    TensorShape in_;
    Mat<Scalar> y_;
};

// Non-overlapping max pooling (kernel == stride).
template <typename Scalar>
class MaxPool2d final : public Layer<Scalar> {
public:
    MaxPool2d(TensorShape in, int k) : in_(in), k_(k) {
        if (in.h % k != 0 || in.w % k != 0) throw ShapeError("MaxPool2d: size not divisible");
        out_ = {in.c, in.h / k, in.w / k};
    }

    Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
        const int n = static_cast<int>(x.cols());
        Mat<Scalar> y(out_.size(), n);
        argmax_.resize(out_.size(), n);
        const int hw = in_.h * in_.w;
        for (int b = 0; b < n; ++b) {
            const Scalar* src = x.col(b).data();
            for (int c = 0; c < in_.c; ++c) {
                for (int oi = 0; oi < out_.h; ++oi) {
                    for (int oj = 0; oj < out_.w; ++oj) {
                        Scalar best = -std::numeric_limits<Scalar>::infinity();
                        int best_idx = -1;
                        for (int ki = 0; ki < k_; ++ki) {
                            for (int kj = 0; kj < k_; ++kj) {
                                const int idx =
                                    c * hw + (oi * k_ + ki) * in_.w + (oj * k_ + kj);
                                if (src[idx] > best) {
                                    best = src[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        const int oidx = c * out_.h * out_.w + oi * out_.w + oj;
                        y(oidx, b) = best;
                        argmax_(oidx, b) = best_idx;
                    }
                }
            }
        }
        return y;
    }

    Mat<Scalar> backward(const Mat<Scalar>& dy) override {
        Mat<Scalar> dx = Mat<Scalar>::Zero(in_.size(), dy.cols());
        for (Eigen::Index b = 0; b < dy.cols(); ++b)
            for (Eigen::Index i = 0; i < dy.rows(); ++i) dx(argmax_(i, b), b) += dy(i, b);
        return dx;
    }

    TensorShape out_shape() const override { return out_; }

private:
    TensorShape in_, out_;
    int k_;
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> argmax_;
};

template <typename Scalar>
class Linear final : public Layer<Scalar> {
public:
    Linear(TensorShape in, int out_dim, std::mt19937_64& rng) : in_(in), out_{out_dim, 1, 1} {
        weight_ = gaussian_init<Scalar>(out_dim, in.size(), Scalar(0.02), rng);
        bias_ = Mat<Scalar>::Zero(out_dim, 1);
        dweight_ = Mat<Scalar>::Zero(out_dim, in.size());
        dbias_ = Mat<Scalar>::Zero(out_dim, 1);
    }

    Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
        x_ = x;
        Mat<Scalar> y = weight_ * x;
        y.colwise() += bias_.col(0);
        return y;
    }

    Mat<Scalar> backward(const Mat<Scalar>& dy) override {
        dweight_.noalias() += dy * x_.transpose();
        dbias_.col(0) += dy.rowwise().sum();
        return weight_.transpose() * dy;
    }

    void collect(const std::string& p, std::vector<TensorRef<Scalar>>& out) override {
        out.push_back({p + ".weight", &weight_, &dweight_, true});
        out.push_back({p + ".bias", &bias_, &dbias_, true});
    }

    TensorShape out_shape() const override { return out_; }

private:
    TensorShape in_, out_;
    Mat<Scalar> weight_, bias_, dweight_, dbias_, x_;
};

// Column-wise softmax; backward expects dL/d(probabilities).
template <typename Scalar>
class Softmax final : public Layer<Scalar> {
public:
    explicit Softmax(TensorShape in) : in_(in) {}

    Mat<Scalar> forward(const Mat<Scalar>& x, bool) override {
        p_.resize(x.rows(), x.cols());
        for (Eigen::Index b = 0; b < x.cols(); ++b) {
            const Scalar m = x.col(b).maxCoeff();
            Vec<Scalar> e = (x.col(b).array() - m).exp();
            p_.col(b) = e / e.sum();
        }
        return p_;
    }

    Mat<Scalar> backward(const Mat<Scalar>& dp) override {
        Mat<Scalar> dz(dp.rows(), dp.cols());
        for (Eigen::Index b = 0; b < dp.cols(); ++b) {
            const Scalar dot = dp.col(b).dot(p_.col(b));
            dz.col(b) = (p_.col(b).array() * (dp.col(b).array() - dot)).matrix();
        }
        return dz;
    }

    TensorShape out_shape() const override { return in_; }

private:
    TensorShape in_;
    Mat<Scalar> p_;
};

}  // namespace dtn::nn
