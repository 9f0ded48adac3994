#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "tvpr/nn.hpp"

namespace tvpr {

// Patch centers in pixel coordinates, one (x, y) row per token.
using Centers = Eigen::Matrix<std::int32_t, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct PatchGrid {
    Index rows = 0;
    Index cols = 0;
    Index count() const { return rows * cols; }
    bool operator==(const PatchGrid&) const = default;
};

// One pyramid stage: 3x3 conv (bias-free; the following BN absorbs it) plus
// inference-time batch-norm statistics.
template <typename T>
struct ConvBlockWeights {
    Tensor<T> kernel; // 3 x 3 x Cin x Cout
    VecX<T> bn_mean, bn_var, bn_gamma, bn_beta;

    template <typename U>
    ConvBlockWeights<U> cast() const {
        return {kernel.template cast<U>(), bn_mean.template cast<U>(),
                bn_var.template cast<U>(), bn_gamma.template cast<U>(),
                bn_beta.template cast<U>()};
    }
};

template <typename T>
struct BackboneWeights {
    std::array<ConvBlockWeights<T>, 4> blocks;
    std::array<MatX<T>, 4> embed; // per-level patch projections, (R_i^2 * C_i) x (D/4)
    VecX<T> input_mean, input_std; // per-channel standardization constants, size 3

    template <typename U>
    BackboneWeights<U> cast() const {
        BackboneWeights<U> out;
        for (int i = 0; i < 4; ++i) out.blocks[i] = blocks[i].template cast<U>();
        for (int i = 0; i < 4; ++i) out.embed[i] = embed[i].template cast<U>();
        out.input_mean = input_mean.template cast<U>();
        out.input_std = input_std.template cast<U>();
        return out;
    }
};

// Four feature maps, each halving the previous one's spatial extents.
template <typename T>
struct FeaturePyramid {
    std::array<Tensor<T>, 4> levels;
};

template <typename T>
struct RawTokenSet {
    MatX<T> tokens; // N x D
    PatchGrid grid; // rows = H/16, cols = W/16; token k sits at (k / cols, k % cols)
    Centers centers; // N x 2, (x, y) of each patch center
};

inline constexpr Index kPatchSize = 16;

// Patch resolution on level i (1-based): 8, 4, 2, 1.
inline constexpr Index patch_resolution(int level) { return kPatchSize >> level; }

// Centers of the 16-px patch grid in input pixel coordinates.
inline Centers patch_centers(const PatchGrid& grid) {
    Centers centers(grid.count(), 2);
    for (Index r = 0; r < grid.rows; ++r)
        for (Index c = 0; c < grid.cols; ++c) {
            centers(r * grid.cols + c, 0) = static_cast<std::int32_t>(kPatchSize * c + 8);
            centers(r * grid.cols + c, 1) = static_cast<std::int32_t>(kPatchSize * r + 8);
        }
    return centers;
}

// Standardizes pixel values and applies the four MaxPool(ReLU(BN(Conv(.))))
// stages. Image values are expected in [0, 1].
template <typename T>
FeaturePyramid<T> build_pyramid(const Tensor<T>& image, const BackboneWeights<T>& w) {
    image.require_rank(3, "build_pyramid input");
    const Index h = image.extent(0), wd = image.extent(1), c = image.extent(2);
    if (h % kPatchSize != 0 || wd % kPatchSize != 0)
        throw ShapeError("input size " + std::to_string(wd) + "x" + std::to_string(h) +
                         " must be divisible by " + std::to_string(kPatchSize));
    if (w.input_mean.size() != c || w.input_std.size() != c)
        throw ShapeError("standardization constants must have one entry per image channel");

    Tensor<T> x(image.shape());
    const Index pixels = h * wd;
    for (Index p = 0; p < pixels; ++p)
        for (Index ch = 0; ch < c; ++ch)
            x.data()[p * c + ch] =
                (image.data()[p * c + ch] - w.input_mean[ch]) / w.input_std[ch];

    FeaturePyramid<T> pyr;
    for (int i = 0; i < 4; ++i) {
        const auto& blk = w.blocks[static_cast<std::size_t>(i)];
        x = conv2d(x, blk.kernel, VecX<T>());
        x = batchnorm_infer(x, blk.bn_mean, blk.bn_var, blk.bn_gamma, blk.bn_beta, T(1e-5));
        x = relu(x);
        x = maxpool2(x);
        pyr.levels[static_cast<std::size_t>(i)] = x;
    }
    return pyr;
}

// Cuts a feature map into non-overlapping R x R patches, flattens each in
// (row, column, channel) order and projects to the embedding width. Patches
// are enumerated row-major over the patch grid.
template <typename T>
MatX<T> patch_embed_level(const Tensor<T>& fmap, Index r, const MatX<T>& projection) {
    fmap.require_rank(3, "patch_embed input");
    const Index h = fmap.extent(0), w = fmap.extent(1), c = fmap.extent(2);
    if (r < 1 || h % r != 0 || w % r != 0)
        throw ShapeError("patch resolution " + std::to_string(r) +
                         " does not divide feature map " + std::to_string(w) + "x" +
                         std::to_string(h));
    const Index flat = r * r * c;
    if (projection.rows() != flat)
        throw ShapeError("patch projection expects " + std::to_string(projection.rows()) +
                         " inputs, patches flatten to " + std::to_string(flat));
    const Index gr = h / r, gc = w / r;
    const Index n = gr * gc;

    MatX<T> patches(n, flat);
    parallel_for(n, 512, [&](std::int64_t k0, std::int64_t k1) {
        for (Index k = static_cast<Index>(k0); k < static_cast<Index>(k1); ++k) {
            const Index pr = k / gc, pc = k % gc;
            T* dst = patches.data() + k * flat;
            for (Index dy = 0; dy < r; ++dy) {
                const T* src = fmap.data() + ((pr * r + dy) * w + pc * r) * c;
                std::copy(src, src + r * c, dst);
                dst += r * c;
            }
        }
    });
    return linear(patches, projection, VecX<T>());
}

// Concatenates the four per-level embeddings (level order 1..4) into raw
// tokens and attaches grid geometry.
template <typename T>
RawTokenSet<T> assemble_raw_tokens(const std::array<MatX<T>, 4>& embeddings,
                                   const PatchGrid& grid) {
    const Index n = embeddings[0].rows();
    Index d = 0;
    for (const auto& e : embeddings) {
        if (e.rows() != n)
            throw ShapeError("level embeddings disagree on patch count: " + std::to_string(n) +
                             " vs " + std::to_string(e.rows()));
        d += e.cols();
    }
    if (n != grid.count())
        throw ShapeError("patch count does not match grid");

    RawTokenSet<T> out;
    out.tokens.resize(n, d);
    Index col = 0;
    for (const auto& e : embeddings) {
        out.tokens.middleCols(col, e.cols()) = e;
        col += e.cols();
    }
    out.grid = grid;
    out.centers = patch_centers(grid);
    return out;
}

// Full front end: pyramid, per-level embedding, concatenation.
template <typename T>
RawTokenSet<T> extract_raw_tokens(const Tensor<T>& image, const BackboneWeights<T>& w) {
    FeaturePyramid<T> pyr = build_pyramid(image, w);
    std::array<MatX<T>, 4> embeddings;
    for (int i = 0; i < 4; ++i)
        embeddings[static_cast<std::size_t>(i)] =
            patch_embed_level(pyr.levels[static_cast<std::size_t>(i)], patch_resolution(i + 1),
                              w.embed[static_cast<std::size_t>(i)]);
    PatchGrid grid{image.extent(0) / kPatchSize, image.extent(1) / kPatchSize};
    return assemble_raw_tokens(embeddings, grid);
}

} // namespace tvpr
