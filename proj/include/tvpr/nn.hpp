#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "tvpr/parallel.hpp"
#include "tvpr/tensor.hpp"

namespace tvpr {

// Deterministic dense kernels. Every function is a pure mapping from inputs
// to outputs; nothing here owns state or threads beyond parallel_for, whose
// results are independent of the worker count.

// 3x3 cross-correlation, stride 1, zero padding 1 (same-size output).
// input H x W x Cin, kernel 3 x 3 x Cin x Cout, bias size Cout or empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const VecX<T>& bias) {
    input.require_rank(3, "conv2d input");
    kernel.require_rank(4, "conv2d kernel");
    if (kernel.extent(0) != 3 || kernel.extent(1) != 3)
        throw ShapeError("conv2d kernel spatial size must be 3x3");
    const Index h = input.extent(0), w = input.extent(1), cin = input.extent(2);
    const Index cout = kernel.extent(3);
    if (kernel.extent(2) != cin)
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(cin) +
                         ", kernel expects " + std::to_string(kernel.extent(2)));
    if (bias.size() != 0 && bias.size() != cout)
        throw ShapeError("conv2d bias length must equal output channels");

    // kernel data is (ky, kx, cin, cout) row-major, i.e. a (9*cin) x cout matrix.
    Eigen::Map<const MatX<T>> kmat(kernel.data(), 9 * cin, cout);

    Tensor<T> out({h, w, cout});
    Eigen::Map<MatX<T>> omat(out.data(), h * w, cout);

    const Index patch = 9 * cin;
    // Block rows so the im2col buffer stays small; the block size depends only
    // on shapes, keeping outputs identical across thread counts.
    const Index rows_per_block = std::clamp<Index>(Index(2'000'000) / patch, 256, 16384);

    parallel_for(h * w, rows_per_block, [&](std::int64_t r0, std::int64_t r1) {
        const Index n = static_cast<Index>(r1 - r0);
        MatX<T> cols(n, patch);
        for (Index r = 0; r < n; ++r) {
            const Index pix = static_cast<Index>(r0) + r;
            const Index y = pix / w, x = pix % w;
            T* dst = cols.data() + r * patch;
            for (Index ky = 0; ky < 3; ++ky) {
                const Index sy = y + ky - 1;
                for (Index kx = 0; kx < 3; ++kx) {
                    const Index sx = x + kx - 1;
                    if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
                        std::fill(dst, dst + cin, T(0));
                    } else {
                        const T* src = input.data() + (sy * w + sx) * cin;
                        std::copy(src, src + cin, dst);
                    }
                    dst += cin;
                }
            }
        }
        omat.middleRows(static_cast<Index>(r0), n).noalias() = cols * kmat;
        if (bias.size() != 0)
            omat.middleRows(static_cast<Index>(r0), n).rowwise() += bias.transpose();
    });
    return out;
}

// 2x2 max pooling with stride 2; extents must be even.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& input) {
    input.require_rank(3, "maxpool2 input");
    const Index h = input.extent(0), w = input.extent(1), c = input.extent(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("maxpool2 requires even spatial extents, got " + std::to_string(h) +
                         "x" + std::to_string(w));
    Tensor<T> out({h / 2, w / 2, c});
    parallel_for(h / 2, 32, [&](std::int64_t y0, std::int64_t y1) {
        for (Index oy = static_cast<Index>(y0); oy < static_cast<Index>(y1); ++oy)
            for (Index ox = 0; ox < w / 2; ++ox)
                for (Index ch = 0; ch < c; ++ch) {
                    const T a = input.at(2 * oy, 2 * ox, ch);
                    const T b = input.at(2 * oy, 2 * ox + 1, ch);
                    const T d = input.at(2 * oy + 1, 2 * ox, ch);
                    const T e = input.at(2 * oy + 1, 2 * ox + 1, ch);
                    out.at(oy, ox, ch) = std::max(std::max(a, b), std::max(d, e));
                }
    });
    return out;
}

// Inference-time batch normalization over the channel axis of an H x W x C map.
template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& input, const VecX<T>& mean, const VecX<T>& var,
                          const VecX<T>& gamma, const VecX<T>& beta, T eps) {
    input.require_rank(3, "batchnorm input");
    const Index c = input.extent(2);
    if (mean.size() != c || var.size() != c || gamma.size() != c || beta.size() != c)
        throw ShapeError("batchnorm statistics must have one entry per channel");
    if ((var.array() < T(0)).any())
        throw ValidationError("batchnorm variance must be non-negative");

    VecX<T> scale(c), shift(c);
    for (Index i = 0; i < c; ++i) {
        scale[i] = gamma[i] / std::sqrt(var[i] + eps);
        shift[i] = beta[i] - mean[i] * scale[i];
    }
    Tensor<T> out(input.shape());
    const Index pixels = input.extent(0) * input.extent(1);
    parallel_for(pixels, 4096, [&](std::int64_t p0, std::int64_t p1) {
        for (Index p = static_cast<Index>(p0); p < static_cast<Index>(p1); ++p) {
            const T* src = input.data() + p * c;
            T* dst = out.data() + p * c;
            for (Index i = 0; i < c; ++i) dst[i] = src[i] * scale[i] + shift[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    out.vec() = input.vec().cwiseMax(T(0));
    return out;
}

template <typename T>
MatX<T> relu(const MatX<T>& input) {
    return input.cwiseMax(T(0));
}

// Row-wise affine map: out = input * weight (+ bias). bias may be empty.
template <typename T>
MatX<T> linear(const MatX<T>& input, const MatX<T>& weight, const VecX<T>& bias) {
    if (input.cols() != weight.rows())
        throw ShapeError("linear: input cols " + std::to_string(input.cols()) +
                         " != weight rows " + std::to_string(weight.rows()));
    if (bias.size() != 0 && bias.size() != weight.cols())
        throw ShapeError("linear: bias length must match weight cols");
    MatX<T> out(input.rows(), weight.cols());
    if (input.rows() >= 512) {
        parallel_for(input.rows(), 256, [&](std::int64_t r0, std::int64_t r1) {
            const Index n = static_cast<Index>(r1 - r0);
            out.middleRows(static_cast<Index>(r0), n).noalias() =
                input.middleRows(static_cast<Index>(r0), n) * weight;
        });
    } else {
        out.noalias() = input * weight;
    }
    if (bias.size() != 0) out.rowwise() += bias.transpose();
    return out;
}

// Max-subtracted softmax along axis 0 (per column) or 1 (per row).
template <typename T>
MatX<T> softmax_axis(const MatX<T>& input, int axis) {
    if (axis != 0 && axis != 1) throw ConfigError("softmax axis must be 0 or 1");
    if (!input.allFinite()) throw ValidationError("softmax input must be finite");
    MatX<T> out(input.rows(), input.cols());
    if (axis == 1) {
        for (Index r = 0; r < input.rows(); ++r) {
            const T m = input.row(r).maxCoeff();
            out.row(r) = (input.row(r).array() - m).exp();
            out.row(r) /= out.row(r).sum();
        }
    } else {
        for (Index c = 0; c < input.cols(); ++c) {
            const T m = input.col(c).maxCoeff();
            out.col(c) = (input.col(c).array() - m).exp();
            out.col(c) /= out.col(c).sum();
        }
    }
    return out;
}

template <typename T>
VecX<T> softmax(const VecX<T>& input) {
    if (!input.allFinite()) throw ValidationError("softmax input must be finite");
    const T m = input.maxCoeff();
    VecX<T> out = (input.array() - m).exp();
    out /= out.sum();
    return out;
}

// Per-row normalization to zero mean / unit variance (population variance),
// followed by an affine transform.
template <typename T>
MatX<T> layer_norm(const MatX<T>& input, const VecX<T>& gamma, const VecX<T>& beta, T eps) {
    const Index d = input.cols();
    if (d < 2) throw ShapeError("layer_norm requires at least 2 features per row");
    if (gamma.size() != d || beta.size() != d)
        throw ShapeError("layer_norm affine parameters must have one entry per feature");
    MatX<T> out(input.rows(), d);
    for (Index r = 0; r < input.rows(); ++r) {
        const T mu = input.row(r).mean();
        const T var = (input.row(r).array() - mu).square().sum() / static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + eps);
        out.row(r) = ((input.row(r).array() - mu) * inv) * gamma.transpose().array() +
                     beta.transpose().array();
    }
    return out;
}

template <typename T>
VecX<T> l2_normalize(const VecX<T>& v) {
    const T n = v.norm();
    if (n == T(0)) throw NormalizationError("cannot L2-normalize a zero vector");
    return v / n;
}

// Exact GELU, x/2 * (1 + erf(x / sqrt(2))).
template <typename T>
T gelu_scalar(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475244)));
}

template <typename T>
MatX<T> gelu(const MatX<T>& input) {
    return input.unaryExpr([](T x) { return gelu_scalar(x); });
}

template <typename T>
struct MsaWeights {
    MatX<T> wq, wk, wv, wo; // each D x D; per-head blocks are column slices
    VecX<T> bq, bk, bv, bo;

    template <typename U>
    MsaWeights<U> cast() const {
        return {wq.template cast<U>(), wk.template cast<U>(), wv.template cast<U>(),
                wo.template cast<U>(), bq.template cast<U>(), bk.template cast<U>(),
                bv.template cast<U>(), bo.template cast<U>()};
    }
};

// Multi-headed self-attention over token rows. Scaled dot-product per head
// (scale 1/sqrt(D/heads)), heads concatenated, then output-projected. No
// positional terms anywhere, so the map is permutation-equivariant in rows.
template <typename T>
MatX<T> msa(const MatX<T>& tokens, const MsaWeights<T>& w, int heads) {
    const Index d = tokens.cols();
    if (heads < 1 || d % heads != 0)
        throw ConfigError("msa: token dim " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    if (w.wq.rows() != d || w.wk.rows() != d || w.wv.rows() != d || w.wo.rows() != d ||
        w.wq.cols() != d || w.wk.cols() != d || w.wv.cols() != d || w.wo.cols() != d)
        throw ShapeError("msa: projection matrices must be DxD");

    const Index n = tokens.rows();
    const Index dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    MatX<T> q = linear(tokens, w.wq, w.bq);
    MatX<T> k = linear(tokens, w.wk, w.bk);
    MatX<T> v = linear(tokens, w.wv, w.bv);

    MatX<T> concat(n, d);
    parallel_for(heads, 1, [&](std::int64_t h0, std::int64_t h1) {
        for (Index hd = static_cast<Index>(h0); hd < static_cast<Index>(h1); ++hd) {
            const Index c0 = hd * dh;
            MatX<T> scores = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
            scores = softmax_axis(scores, 1);
            concat.middleCols(c0, dh).noalias() = scores * v.middleCols(c0, dh);
        }
    });
    return linear(concat, w.wo, w.bo);
}

// Two-layer perceptron with GELU activation, applied row-wise.
template <typename T>
MatX<T> mlp_block(const MatX<T>& tokens, const MatX<T>& w1, const VecX<T>& b1,
                  const MatX<T>& w2, const VecX<T>& b2) {
    MatX<T> hidden = gelu(linear(tokens, w1, b1));
    return linear(hidden, w2, b2);
}

} // namespace tvpr
