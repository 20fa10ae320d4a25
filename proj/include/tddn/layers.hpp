#pragma once

// Forward and reverse-mode kernels for the fixed layer set: width-2 causal
// conv1d, ReLU, tanh, max-pooling, affine maps, softmax and MSE.
//
// Batched tensors put the sample index first (B x T x C). Backward kernels
// accumulate into parameter gradients and overwrite input gradients.
// Dense products go through Eigen, which is single-threaded and
// deterministic here.

#include "tddn/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace tddn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

inline MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
    return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
    return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// Rows [x_{t-1} | x_t] with x_{-1} = 0, shape (B*T) x 2C.
inline Tensor conv_im2col(const Tensor& in) {
    const std::size_t B = in.dim(0), T = in.dim(1), C = in.dim(2);
    Tensor cols({B * T, 2 * C});
    for (std::size_t b = 0; b < B; ++b) {
        const double* src = in.data() + b * T * C;
        double* dst = cols.data() + b * T * 2 * C;
        for (std::size_t t = 0; t < T; ++t) {
            double* row = dst + t * 2 * C;
            if (t > 0) std::copy_n(src + (t - 1) * C, C, row);
            std::copy_n(src + t * C, C, row + C);
        }
    }
    return cols;
}

} // namespace detail

inline constexpr std::size_t kConvWidth = 2;

/// in: B x T x C, filters: L x 2 x C (tap 0 sees row t-1, tap 1 sees row t),
/// bias: L. One zero row is prepended, so the output is B x T x L.
inline Tensor conv1d(const Tensor& in, const Tensor& filters, const Tensor& bias) {
    if (in.rank() != 3) throw ShapeError("conv1d: input must be B x T x C, got " + shape_str(in.shape()));
    const std::size_t B = in.dim(0), T = in.dim(1), C = in.dim(2);
    if (filters.rank() != 3 || filters.dim(1) != kConvWidth || filters.dim(2) != C) {
        throw ShapeError("conv1d: filters " + shape_str(filters.shape()) + " do not match " +
                         std::to_string(C) + " input channels");
    }
    const std::size_t L = filters.dim(0);
    require_shape(bias, {L}, "conv1d bias");
    const Tensor cols = detail::conv_im2col(in);
    Tensor out({B, T, L});
    auto o = detail::as_mat(out, B * T, L);
    o.noalias() = detail::as_mat(cols, B * T, 2 * C) * detail::as_mat(filters, L, 2 * C).transpose();
    o.rowwise() += detail::ConstVecMap(bias.data(), static_cast<Eigen::Index>(L)).transpose();
    return out;
}

inline void conv1d_backward(const Tensor& in, const Tensor& filters, const Tensor& dout, Tensor& dfilters,
                            Tensor& dbias, Tensor* din) {
    const std::size_t B = in.dim(0), T = in.dim(1), C = in.dim(2), L = filters.dim(0);
    require_shape(dout, {B, T, L}, "conv1d_backward dout");
    const Tensor cols = detail::conv_im2col(in);
    const auto g = detail::as_mat(dout, B * T, L);
    detail::as_mat(dfilters, L, 2 * C).noalias() += g.transpose() * detail::as_mat(cols, B * T, 2 * C);
    detail::VecMap(dbias.data(), static_cast<Eigen::Index>(L)) += g.colwise().sum().transpose();
    if (din) {
        Tensor dcols({B * T, 2 * C});
        detail::as_mat(dcols, B * T, 2 * C).noalias() = g * detail::as_mat(filters, L, 2 * C);
        *din = Tensor(in.shape());
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t t = 0; t < T; ++t) {
                const double* row = dcols.data() + (b * T + t) * 2 * C;
                double* cur = din->data() + (b * T + t) * C;
                for (std::size_t c = 0; c < C; ++c) cur[c] += row[C + c];
                if (t > 0) {
                    double* prev = cur - C;
                    for (std::size_t c = 0; c < C; ++c) prev[c] += row[c];
                }
            }
        }
    }
}

inline Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
    return y;
}

/// Gradient of relu given its output (y > 0 exactly where x > 0).
inline Tensor relu_backward(const Tensor& y, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(y[i] > 0.0)) dx[i] = 0.0;
    return dx;
}

inline Tensor tanh(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.values()) v = std::tanh(v);
    return y;
}

inline Tensor tanh_backward(const Tensor& y, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - y[i] * y[i];
    return dx;
}

struct PoolResult {
    Tensor out;
    std::vector<std::uint32_t> argmax; // flat index into the input, per output element
};

/// Non-overlapping max over the time axis of B x T x L. Output length is
/// floor((T - p)/s) + 1; with p = s = 2 a trailing odd row is dropped.
/// Ties resolve to the earlier row.
inline PoolResult maxpool1d(const Tensor& in, std::size_t p = 2, std::size_t s = 2) {
    if (in.rank() != 3) throw ShapeError("maxpool1d: input must be B x T x L");
    if (p < 1 || s < 1) throw ShapeError("maxpool1d: pool and stride must be >= 1");
    const std::size_t B = in.dim(0), T = in.dim(1), L = in.dim(2);
    if (T < p) {
        throw ShapeError("maxpool1d: length " + std::to_string(T) + " shorter than pool size " +
                         std::to_string(p));
    }
    const std::size_t To = (T - p) / s + 1;
    PoolResult r{Tensor({B, To, L}), std::vector<std::uint32_t>(B * To * L)};
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < To; ++t) {
            for (std::size_t l = 0; l < L; ++l) {
                std::size_t best = (b * T + t * s) * L + l;
                for (std::size_t k = 1; k < p; ++k) {
                    const std::size_t idx = (b * T + t * s + k) * L + l;
                    if (in[idx] > in[best]) best = idx;
                }
                const std::size_t o = (b * To + t) * L + l;
                r.out[o] = in[best];
                r.argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return r;
}

/// Routes each output gradient to its stored argmax.
inline Tensor maxpool1d_backward(const PoolResult& fwd, const Shape& in_shape, const Tensor& dout) {
    require_shape(dout, fwd.out.shape(), "maxpool1d_backward dout");
    Tensor din(in_shape);
    for (std::size_t o = 0; o < dout.size(); ++o) din[fwd.argmax[o]] += dout[o];
    return din;
}

/// in: B x d_in (or a single d_in vector), weight: d_out x d_in, bias: d_out.
inline Tensor linear(const Tensor& in, const Tensor& weight, const Tensor& bias) {
    if (weight.rank() != 2) throw ShapeError("linear: weight must be d_out x d_in");
    const std::size_t dout = weight.dim(0), din = weight.dim(1);
    const bool single = in.rank() == 1;
    const std::size_t B = single ? 1 : in.dim(0);
    if ((single ? in.dim(0) : (in.rank() == 2 ? in.dim(1) : 0)) != din) {
        throw ShapeError("linear: input " + shape_str(in.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    require_shape(bias, {dout}, "linear bias");
    Tensor out(single ? Shape{dout} : Shape{B, dout});
    auto o = detail::as_mat(out, B, dout);
    o.noalias() = detail::as_mat(in, B, din) * detail::as_mat(weight, dout, din).transpose();
    o.rowwise() += detail::ConstVecMap(bias.data(), static_cast<Eigen::Index>(dout)).transpose();
    return out;
}

inline void linear_backward(const Tensor& in, const Tensor& weight, const Tensor& dout_t, Tensor& dweight,
                            Tensor& dbias, Tensor* din_t) {
    const std::size_t dout = weight.dim(0), din = weight.dim(1);
    const std::size_t B = in.rank() == 1 ? 1 : in.dim(0);
    if (dout_t.size() != B * dout) throw ShapeError("linear_backward: upstream gradient shape mismatch");
    const auto g = detail::as_mat(dout_t, B, dout);
    detail::as_mat(dweight, dout, din).noalias() += g.transpose() * detail::as_mat(in, B, din);
    detail::VecMap(dbias.data(), static_cast<Eigen::Index>(dout)) += g.colwise().sum().transpose();
    if (din_t) {
        *din_t = Tensor(in.shape());
        detail::as_mat(*din_t, B, din).noalias() = g * detail::as_mat(weight, dout, din);
    }
}

/// Max-shifted softmax written into out (same length as scores).
inline void softmax(std::span<const double> scores, std::span<double> out) {
    if (scores.empty() || out.size() != scores.size()) throw ShapeError("softmax: bad lengths");
    double mx = scores[0];
    for (double v : scores) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
}

inline std::vector<double> softmax(std::span<const double> scores) {
    std::vector<double> out(scores.size());
    softmax(scores, out);
    return out;
}

/// de_i = p_i (dp_i - sum_k p_k dp_k)
inline void softmax_backward(std::span<const double> probs, std::span<const double> dprobs, std::span<double> dscores) {
    double dot = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * dprobs[i];
    for (std::size_t i = 0; i < probs.size(); ++i) dscores[i] = probs[i] * (dprobs[i] - dot);
}

struct LossResult {
    double value = 0.0;
    std::vector<double> grad; // d loss / d pred
};

inline LossResult mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.empty()) throw ShapeError("mse_loss: empty batch");
    if (pred.size() != target.size()) throw ShapeError("mse_loss: length mismatch");
    const double n = static_cast<double>(pred.size());
    LossResult r;
    r.grad.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        r.value += d * d;
        r.grad[i] = 2.0 * d / n;
    }
    r.value /= n;
    return r;
}

} // namespace tddn
