#pragma once

#include <array>
#include <vector>

#include "tvpr/backbone.hpp"
#include "tvpr/nn.hpp"

namespace tvpr {

inline constexpr double kLayerNormEps = 1e-6;

template <typename T>
struct EncoderLayerWeights {
    VecX<T> ln1_gamma, ln1_beta;
    MsaWeights<T> msa;
    VecX<T> ln2_gamma, ln2_beta;
    MatX<T> mlp_w1;
    VecX<T> mlp_b1;
    MatX<T> mlp_w2;
    VecX<T> mlp_b2;

    template <typename U>
    EncoderLayerWeights<U> cast() const {
        return {ln1_gamma.template cast<U>(), ln1_beta.template cast<U>(),
                msa.template cast<U>(),       ln2_gamma.template cast<U>(),
                ln2_beta.template cast<U>(),  mlp_w1.template cast<U>(),
                mlp_b1.template cast<U>(),    mlp_w2.template cast<U>(),
                mlp_b2.template cast<U>()};
    }
};

template <typename T>
struct EncoderWeights {
    std::vector<EncoderLayerWeights<T>> layers;
    VecX<T> class_token; // empty outside classification pre-training
    int heads = 8;

    template <typename U>
    EncoderWeights<U> cast() const {
        EncoderWeights<U> out;
        out.layers.reserve(layers.size());
        for (const auto& l : layers) out.layers.push_back(l.template cast<U>());
        out.class_token = class_token.template cast<U>();
        out.heads = heads;
        return out;
    }
};

// Token matrices tapped from three encoder depths, sharing one patch grid.
template <typename T>
struct MultiLevelTokens {
    MatX<T> low, mid, high; // each N x D
    Centers centers;
    PatchGrid grid;

    template <typename U>
    MultiLevelTokens<U> cast() const {
        return {low.template cast<U>(), mid.template cast<U>(), high.template cast<U>(),
                centers, grid};
    }
};

// Runs the pre-norm residual stack and returns every layer's output:
// x <- x + MSA(LN(x)); x <- x + MLP(LN(x)). No positional embedding is added
// anywhere, so row permutations commute with the whole stack. When
// `with_class_token` is set, the learned class token is prepended as row 0 of
// every output.
template <typename T>
std::vector<MatX<T>> encode(const MatX<T>& tokens, const EncoderWeights<T>& w,
                            bool with_class_token = false) {
    MatX<T> x;
    if (with_class_token) {
        if (w.class_token.size() != tokens.cols())
            throw ShapeError("class token width does not match token dim");
        x.resize(tokens.rows() + 1, tokens.cols());
        x.row(0) = w.class_token.transpose();
        x.bottomRows(tokens.rows()) = tokens;
    } else {
        x = tokens;
    }

    std::vector<MatX<T>> outputs;
    outputs.reserve(w.layers.size());
    for (const auto& layer : w.layers) {
        if (layer.msa.wq.rows() != x.cols())
            throw ShapeError("encoder layer weights expect dim " +
                             std::to_string(layer.msa.wq.rows()) + ", tokens have " +
                             std::to_string(x.cols()));
        MatX<T> normed = layer_norm(x, layer.ln1_gamma, layer.ln1_beta, T(kLayerNormEps));
        x += msa(normed, layer.msa, w.heads);
        normed = layer_norm(x, layer.ln2_gamma, layer.ln2_beta, T(kLayerNormEps));
        x += mlp_block(normed, layer.mlp_w1, layer.mlp_b1, layer.mlp_w2, layer.mlp_b2);
        outputs.push_back(x);
    }
    return outputs;
}

// Selects the low / mid / high tap depths (1-based layer indices).
template <typename T>
MultiLevelTokens<T> tap_levels(const std::vector<MatX<T>>& layer_outputs,
                               const std::array<int, 3>& taps, const Centers& centers,
                               const PatchGrid& grid) {
    for (int t : taps)
        if (t < 1 || static_cast<std::size_t>(t) > layer_outputs.size())
            throw ConfigError("tap index " + std::to_string(t) + " outside 1.." +
                              std::to_string(layer_outputs.size()));
    MultiLevelTokens<T> out;
    out.low = layer_outputs[static_cast<std::size_t>(taps[0] - 1)];
    out.mid = layer_outputs[static_cast<std::size_t>(taps[1] - 1)];
    out.high = layer_outputs[static_cast<std::size_t>(taps[2] - 1)];
    out.centers = centers;
    out.grid = grid;
    return out;
}

} // namespace tvpr
