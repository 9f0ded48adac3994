#pragma once

// Independent reference implementations used only by tests. These are written
// as plain loops with double accumulation and share no code with the library
// kernels they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "tvpr/rng.hpp"
#include "tvpr/tensor.hpp"

namespace oracle {

using tvpr::Index;
using tvpr::MatX;
using tvpr::Tensor;
using tvpr::VecX;

// 6-loop cross-correlation, pad 1, stride 1.
inline Tensor<double> conv2d(const Tensor<float>& in, const Tensor<float>& k,
                             const std::vector<double>& bias) {
    const Index h = in.extent(0), w = in.extent(1), cin = in.extent(2);
    const Index cout = k.extent(3);
    Tensor<double> out({h, w, cout});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index co = 0; co < cout; ++co) {
                double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(co)];
                for (Index ky = 0; ky < 3; ++ky)
                    for (Index kx = 0; kx < 3; ++kx)
                        for (Index ci = 0; ci < cin; ++ci) {
                            const Index sy = y + ky - 1, sx = x + kx - 1;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                            acc += static_cast<double>(in.at(sy, sx, ci)) *
                                   static_cast<double>(k.at(ky, kx, ci, co));
                        }
                out.at(y, x, co) = acc;
            }
    return out;
}

// Window-scan 2x2 stride-2 max pooling.
inline Tensor<float> maxpool2(const Tensor<float>& in) {
    const Index h = in.extent(0), w = in.extent(1), c = in.extent(2);
    Tensor<float> out({h / 2, w / 2, c});
    for (Index y = 0; y < h / 2; ++y)
        for (Index x = 0; x < w / 2; ++x)
            for (Index ch = 0; ch < c; ++ch) {
                float m = in.at(2 * y, 2 * x, ch);
                for (Index dy = 0; dy < 2; ++dy)
                    for (Index dx = 0; dx < 2; ++dx)
                        m = std::max(m, in.at(2 * y + dy, 2 * x + dx, ch));
                out.at(y, x, ch) = m;
            }
    return out;
}

// Direct batchnorm formula evaluated in double.
inline Tensor<double> batchnorm(const Tensor<float>& in, const VecX<float>& mean,
                                const VecX<float>& var, const VecX<float>& gamma,
                                const VecX<float>& beta, double eps) {
    const Index h = in.extent(0), w = in.extent(1), c = in.extent(2);
    Tensor<double> out({h, w, c});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            for (Index ch = 0; ch < c; ++ch)
                out.at(y, x, ch) = (static_cast<double>(in.at(y, x, ch)) - mean[ch]) /
                                       std::sqrt(static_cast<double>(var[ch]) + eps) * gamma[ch] +
                                   beta[ch];
    return out;
}

// Triple-loop matrix product with optional bias, double accumulation.
inline MatX<double> linear(const MatX<float>& x, const MatX<float>& w, const VecX<float>& b) {
    MatX<double> out(x.rows(), w.cols());
    for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j) {
            double acc = b.size() ? static_cast<double>(b[j]) : 0.0;
            for (Index k = 0; k < x.cols(); ++k)
                acc += static_cast<double>(x(i, k)) * static_cast<double>(w(k, j));
            out(i, j) = acc;
        }
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double sum = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& e : out) e /= sum;
    return out;
}

// Naive per-head scaled dot-product attention in double.
inline MatX<double> msa(const MatX<float>& x, const MatX<float>& wq, const VecX<float>& bq,
                        const MatX<float>& wk, const VecX<float>& bk, const MatX<float>& wv,
                        const VecX<float>& bv, const MatX<float>& wo, const VecX<float>& bo,
                        int heads) {
    const Index n = x.rows(), d = x.cols();
    const Index dh = d / heads;
    MatX<double> q = linear(x, wq, bq), k = linear(x, wk, bk), v = linear(x, wv, bv);
    MatX<double> concat(n, d);
    for (int h = 0; h < heads; ++h) {
        const Index c0 = h * dh;
        for (Index i = 0; i < n; ++i) {
            std::vector<double> logits(static_cast<std::size_t>(n));
            for (Index j = 0; j < n; ++j) {
                double dot = 0;
                for (Index e = 0; e < dh; ++e) dot += q(i, c0 + e) * k(j, c0 + e);
                logits[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dh));
            }
            const std::vector<double> att = softmax(logits);
            for (Index e = 0; e < dh; ++e) {
                double acc = 0;
                for (Index j = 0; j < n; ++j)
                    acc += att[static_cast<std::size_t>(j)] * v(j, c0 + e);
                concat(i, c0 + e) = acc;
            }
        }
    }
    MatX<double> out(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) {
            double acc = bo.size() ? static_cast<double>(bo[j]) : 0.0;
            for (Index k2 = 0; k2 < d; ++k2) acc += concat(i, k2) * static_cast<double>(wo(k2, j));
            out(i, j) = acc;
        }
    return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Largest relative deviation between an implementation and a reference.
template <typename A, typename B>
double rel_error(const A& got, const B& want) {
    double num = 0, den = 0;
    for (Index i = 0; i < got.size(); ++i) {
        num = std::max(num, std::abs(static_cast<double>(got(i)) - static_cast<double>(want(i))));
        den = std::max(den, std::abs(static_cast<double>(want(i))));
    }
    return num / std::max(den, 1e-12);
}

inline MatX<float> random_matrix(tvpr::Rng& rng, Index rows, Index cols, double scale = 1.0) {
    MatX<float> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<float>(rng.normal() * scale);
    return m;
}

inline VecX<float> random_vector(tvpr::Rng& rng, Index n, double scale = 1.0) {
    VecX<float> v(n);
    for (Index i = 0; i < n; ++i) v[i] = static_cast<float>(rng.normal() * scale);
    return v;
}

inline Tensor<float> random_tensor(tvpr::Rng& rng, std::vector<Index> shape, double scale = 1.0) {
    Tensor<float> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal() * scale);
    return t;
}

} // namespace oracle
