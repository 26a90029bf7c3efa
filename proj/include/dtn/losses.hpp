#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "dtn/nn/tensor.hpp"

// Loss terms of the adversarial transfer objective, written as pure
// functions of network outputs. Batches are column-per-sample matrices.
// Every loss has a matching analytic gradient used both by the trainer
// and by the finite-difference tests.
namespace dtn::loss {

using nn::Mat;

inline constexpr double kLogClamp = 1e-7;   // floor for log arguments
inline constexpr double kTvEps = 1e-12;     // stabilizer inside the TV root

template <typename Scalar>
struct LossWeights {
    Scalar alpha = Scalar(15);
    Scalar beta = Scalar(15);
    Scalar gamma = Scalar(0);
    Scalar tv_exponent_b = Scalar(1);
};

struct LossReport {
    int64_t step = 0;
    double l_d = 0, l_gang = 0, l_const = 0, l_tid = 0, l_tv = 0, l_g_total = 0;
    bool clamped = false;  // some probability hit the log floor this step
};

template <typename Scalar>
void require_same_shape(const Mat<Scalar>& u, const Mat<Scalar>& v, const char* where) {
    if (u.rows() != v.rows() || u.cols() != v.cols())
        throw nn::ShapeError(std::string(where) + ": shape mismatch");
}

template <typename Scalar>
Scalar mse_distance(const Mat<Scalar>& u, const Mat<Scalar>& v) {
    require_same_shape(u, v, "mse_distance");
    return (u - v).array().square().mean();
}

// Mean of -log p over one designated row of a simplex batch.
template <typename Scalar>
Scalar neg_log_row(const Mat<Scalar>& p, int row, bool* clamped) {
    Scalar acc = 0;
    for (Eigen::Index b = 0; b < p.cols(); ++b) {
        Scalar v = p(row, b);
        if (v < Scalar(kLogClamp)) {
            v = Scalar(kLogClamp);
            if (clamped) *clamped = true;
        }
        acc -= std::log(v);
    }
    return acc / Scalar(p.cols());
}

template <typename Scalar>
void neg_log_row_grad(const Mat<Scalar>& p, int row, Mat<Scalar>& dp) {
    dp.setZero(p.rows(), p.cols());
    const Scalar n = Scalar(p.cols());
    for (Eigen::Index b = 0; b < p.cols(); ++b)
        if (p(row, b) >= Scalar(kLogClamp)) dp(row, b) = -Scalar(1) / (p(row, b) * n);
}

// L_D over the three discriminator classes: class 0 for transfers of source
// samples, class 1 for transfers of target samples, class 2 for real
// target samples.
template <typename Scalar>
Scalar loss_discriminator(const Mat<Scalar>& p_gs, const Mat<Scalar>& p_gt,
                          const Mat<Scalar>& p_t, bool* clamped = nullptr) {
    return neg_log_row(p_gs, 0, clamped) + neg_log_row(p_gt, 1, clamped) +
           neg_log_row(p_t, 2, clamped);
}

template <typename Scalar>
void loss_discriminator_grad(const Mat<Scalar>& p_gs, const Mat<Scalar>& p_gt,
                             const Mat<Scalar>& p_t, Mat<Scalar>& d_gs, Mat<Scalar>& d_gt,
                             Mat<Scalar>& d_t) {
    neg_log_row_grad(p_gs, 0, d_gs);
    neg_log_row_grad(p_gt, 1, d_gt);
    neg_log_row_grad(p_t, 2, d_t);
}

// Generator's adversarial term: push both transfer streams toward the
// real-target class.
template <typename Scalar>
Scalar loss_gan_generator(const Mat<Scalar>& p_gs, const Mat<Scalar>& p_gt,
                          bool* clamped = nullptr) {
    return neg_log_row(p_gs, 2, clamped) + neg_log_row(p_gt, 2, clamped);
}

template <typename Scalar>
void loss_gan_generator_grad(const Mat<Scalar>& p_gs, const Mat<Scalar>& p_gt,
                             Mat<Scalar>& d_gs, Mat<Scalar>& d_gt) {
    neg_log_row_grad(p_gs, 2, d_gs);
    neg_log_row_grad(p_gt, 2, d_gt);
}

// Feature constancy: per-sample MSE in representation space, averaged over
// the batch. Written in the paper as a sum over the training set; mean
// semantics keep the weight alpha batch-size independent.
template <typename Scalar>
Scalar loss_constancy(const Mat<Scalar>& f_x, const Mat<Scalar>& f_gx) {
    require_same_shape(f_x, f_gx, "loss_constancy");
    return mse_distance(f_x, f_gx);
}

template <typename Scalar>
void loss_constancy_grad(const Mat<Scalar>& f_x, const Mat<Scalar>& f_gx, Mat<Scalar>& d_fgx) {
    require_same_shape(f_x, f_gx, "loss_constancy");
    d_fgx = Scalar(2) * (f_gx - f_x) / Scalar(f_x.size());
}

// Identity regularizer on the target domain: G should leave t alone.
template <typename Scalar>
Scalar loss_identity(const Mat<Scalar>& t, const Mat<Scalar>& g_t) {
    require_same_shape(t, g_t, "loss_identity");
    return mse_distance(t, g_t);
}

template <typename Scalar>
void loss_identity_grad(const Mat<Scalar>& t, const Mat<Scalar>& g_t, Mat<Scalar>& d_gt) {
    require_same_shape(t, g_t, "loss_identity");
    d_gt = Scalar(2) * (g_t - t) / Scalar(t.size());
}

// Anisotropic total variation with exponent B, summed over the positions
// where both the right and the down neighbor exist, averaged over the
// batch. Channels are treated as independent planes.
template <typename Scalar>
Scalar loss_total_variation(const Mat<Scalar>& z, const nn::TensorShape& shape, Scalar b_exp) {
    if (shape.h < 2 || shape.w < 2)
        throw nn::ShapeError("loss_total_variation: image must be at least 2x2");
    Scalar acc = 0;
    for (Eigen::Index n = 0; n < z.cols(); ++n) {
        const Scalar* img = z.col(n).data();
        for (int c = 0; c < shape.c; ++c) {
            const Scalar* plane = img + c * shape.h * shape.w;
            for (int i = 0; i + 1 < shape.h; ++i) {
                for (int j = 0; j + 1 < shape.w; ++j) {
                    const Scalar dh = plane[i * shape.w + j + 1] - plane[i * shape.w + j];
                    const Scalar dv = plane[(i + 1) * shape.w + j] - plane[i * shape.w + j];
                    acc += std::pow(dh * dh + dv * dv + Scalar(kTvEps), b_exp / Scalar(2));
                }
            }
        }
    }
    return acc / Scalar(z.cols());
}

template <typename Scalar>
void loss_total_variation_grad(const Mat<Scalar>& z, const nn::TensorShape& shape, Scalar b_exp,
                               Mat<Scalar>& dz) {
    if (shape.h < 2 || shape.w < 2)
        throw nn::ShapeError("loss_total_variation: image must be at least 2x2");
    dz.setZero(z.rows(), z.cols());
    const Scalar inv_n = Scalar(1) / Scalar(z.cols());
    for (Eigen::Index n = 0; n < z.cols(); ++n) {
        const Scalar* img = z.col(n).data();
        Scalar* gimg = dz.col(n).data();
        for (int c = 0; c < shape.c; ++c) {
            const int off = c * shape.h * shape.w;
            for (int i = 0; i + 1 < shape.h; ++i) {
                for (int j = 0; j + 1 < shape.w; ++j) {
                    const int p = off + i * shape.w + j;
                    const Scalar dh = img[p + 1] - img[p];
                    const Scalar dv = img[p + shape.w] - img[p];
                    const Scalar a = dh * dh + dv * dv + Scalar(kTvEps);
                    const Scalar coef = b_exp * std::pow(a, b_exp / Scalar(2) - Scalar(1)) * inv_n;
                    gimg[p + 1] += coef * dh;
                    gimg[p + shape.w] += coef * dv;
                    gimg[p] -= coef * (dh + dv);
                }
            }
        }
    }
}

template <typename Scalar>
Scalar loss_generator_total(Scalar l_gang, Scalar l_const, Scalar l_tid, Scalar l_tv,
                            const LossWeights<Scalar>& w) {
    return l_gang + w.alpha * l_const + w.beta * l_tid + w.gamma * l_tv;
}

template <typename Scalar>
LossReport make_report(int64_t step, Scalar l_d, Scalar l_gang, Scalar l_const, Scalar l_tid,
                       Scalar l_tv, const LossWeights<Scalar>& w, bool clamped = false) {
    LossReport r;
    r.step = step;
    r.l_d = static_cast<double>(l_d);
    r.l_gang = static_cast<double>(l_gang);
    r.l_const = static_cast<double>(l_const);
    r.l_tid = static_cast<double>(l_tid);
    r.l_tv = static_cast<double>(l_tv);
    r.l_g_total = static_cast<double>(loss_generator_total(l_gang, l_const, l_tid, l_tv, w));
    r.clamped = clamped;
    return r;
}

// Two-term baseline risks with a binary discriminator. Row 0 of a
// probability column is the "real target" class. The generator term is the
// non-saturating -log D(G(x)) form.
template <typename Scalar>
struct BaselineRisks {
    Scalar r_gan_d = 0;
    Scalar r_gan_g = 0;
    Scalar r_const = 0;
    Scalar total_g = 0;
};

template <typename Scalar>
BaselineRisks<Scalar> baseline_risks(const Mat<Scalar>& d_probs_fake,
                                     const Mat<Scalar>& d_probs_real, const Mat<Scalar>& f_x,
                                     const Mat<Scalar>& f_gx, Scalar alpha,
                                     bool* clamped = nullptr) {
    if (d_probs_fake.rows() != 2 || d_probs_real.rows() != 2)
        throw nn::ShapeError("baseline_risks: expected binary probabilities");
    BaselineRisks<Scalar> r;
    r.r_gan_d = neg_log_row(d_probs_real, 0, clamped) + neg_log_row(d_probs_fake, 1, clamped);
    r.r_gan_g = neg_log_row(d_probs_fake, 0, clamped);
    r.r_const = loss_constancy(f_x, f_gx);
    r.total_g = r.r_gan_g + alpha * r.r_const;
    return r;
}

}  // namespace dtn::loss
