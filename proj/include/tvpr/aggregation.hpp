#pragma once

#include <string>
#include <vector>

#include "tvpr/encoder.hpp"
#include "tvpr/nn.hpp"

namespace tvpr {

// Multi-level attention aggregation: per-level attention maps over patch
// tokens, a fused [0,1] mask for key-patch selection, and the reduced
// unit-norm global descriptor, plus the three ablation variants.

enum class AggVariant {
    standard, // three maps from concatenated tokens, per-level globals
    plain,    // three maps, each from its own level's tokens only
    ml_satt,  // single map from concatenated tokens, global over the concat
    sl_satt,  // single map and global from the last-layer tokens only
};

inline const char* to_string(AggVariant v) {
    switch (v) {
        case AggVariant::standard: return "standard";
        case AggVariant::plain: return "plain";
        case AggVariant::ml_satt: return "mL-sATT";
        case AggVariant::sl_satt: return "sL-sATT";
    }
    return "?";
}

inline AggVariant parse_variant(const std::string& s) {
    if (s == "standard" || s == "mL-mATT-standard") return AggVariant::standard;
    if (s == "plain" || s == "mL-mATT-plain") return AggVariant::plain;
    if (s == "mL-sATT" || s == "ml-satt" || s == "ml_satt") return AggVariant::ml_satt;
    if (s == "sL-sATT" || s == "sl-satt" || s == "sl_satt") return AggVariant::sl_satt;
    throw ConfigError("unknown aggregation variant '" + s + "'");
}

// Attention head parameters. `attn` holds one column per attention map
// (L, M, H for the three-map variants; a single column otherwise); row count
// is 3D when maps are computed from concatenated tokens, D otherwise.
// `wg` is the reduction matrix (3D x D, or D x D for sl_satt).
template <typename T>
struct HeadParams {
    MatX<T> attn;
    MatX<T> wg;

    template <typename U>
    HeadParams<U> cast() const {
        return {attn.template cast<U>(), wg.template cast<U>()};
    }
};

// Per-level maps plus the fused mask. Single-map variants carry their one map
// in all three slots so downstream consumers (visualization) stay uniform.
template <typename T>
struct AttentionBundle {
    VecX<T> a_low, a_mid, a_high;
    VecX<T> fused;
};

template <typename T>
struct ImageDescriptorT {
    VecX<T> global;   // unit-norm, dim D
    Centers key_coords; // M x 2 pixel coordinates
    MatX<T> key_descs;  // M x D, raw mid-level token rows
    std::string id;
    PatchGrid grid;
};

using ImageDescriptor = ImageDescriptorT<float>;

template <typename T>
struct AggregateResult {
    ImageDescriptorT<T> descriptor;
    AttentionBundle<T> attention;
};

struct AggregateConfig {
    AggVariant variant = AggVariant::standard;
    double tau = 0.02; // fused-attention threshold for key patches
    bool keep_all_patches = false;
};

// Row-wise concatenation of the three tapped token matrices, L|M|H order.
template <typename T>
MatX<T> concat_tokens(const MatX<T>& low, const MatX<T>& mid, const MatX<T>& high) {
    if (low.rows() != mid.rows() || mid.rows() != high.rows())
        throw ShapeError("concat_tokens: token counts differ across levels");
    if (low.cols() != mid.cols() || mid.cols() != high.cols())
        throw ShapeError("concat_tokens: token dims differ across levels");
    MatX<T> out(low.rows(), 3 * low.cols());
    out << low, mid, high;
    return out;
}

// softmax over the N scalar projections of the tokens.
template <typename T>
VecX<T> attention_map(const MatX<T>& tokens, const VecX<T>& w) {
    if (tokens.cols() != w.size())
        throw ShapeError("attention projection length " + std::to_string(w.size()) +
                         " does not match token dim " + std::to_string(tokens.cols()));
    return softmax<T>(tokens * w);
}

inline constexpr double kMinMaxEps = 1e-12;

// (x - min) / (max - min + eps); a constant map yields all zeros.
template <typename T>
VecX<T> minmax_norm(const VecX<T>& x) {
    if (x.size() < 1) throw ShapeError("minmax_norm of empty map");
    const T lo = x.minCoeff(), hi = x.maxCoeff();
    return (x.array() - lo) / (hi - lo + T(kMinMaxEps));
}

// MinMaxNorm(sum_i MinMaxNorm(a_i)).
template <typename T>
VecX<T> fuse_attention(const VecX<T>& a_low, const VecX<T>& a_mid, const VecX<T>& a_high) {
    if (a_low.size() != a_mid.size() || a_mid.size() != a_high.size())
        throw ShapeError("fuse_attention: map lengths differ");
    VecX<T> sum = minmax_norm(a_low) + minmax_norm(a_mid) + minmax_norm(a_high);
    return minmax_norm(sum);
}

// Attention-weighted token sum, G_i = a_i^T P_i.
template <typename T>
VecX<T> level_global(const VecX<T>& a, const MatX<T>& tokens) {
    if (a.size() != tokens.rows())
        throw ShapeError("level_global: attention length does not match token count");
    return tokens.transpose() * a;
}

// Concatenate -> L2 normalize -> project -> L2 normalize.
template <typename T>
VecX<T> reduce_global(const VecX<T>& g_low, const VecX<T>& g_mid, const VecX<T>& g_high,
                      const MatX<T>& wg) {
    VecX<T> gstar(g_low.size() + g_mid.size() + g_high.size());
    gstar << g_low, g_mid, g_high;
    if (wg.rows() != gstar.size())
        throw ShapeError("reduction matrix expects " + std::to_string(wg.rows()) +
                         " inputs, concatenated global has " + std::to_string(gstar.size()));
    const VecX<T> inner = l2_normalize(gstar);
    return l2_normalize<T>(wg.transpose() * inner);
}

// Rows of `descs` whose fused-attention score strictly exceeds tau, in grid
// order. Descriptor rows are kept raw (no re-normalization).
template <typename T>
std::pair<Centers, MatX<T>> select_key_patches(const VecX<T>& fused, double tau,
                                               const MatX<T>& descs, const Centers& centers) {
    if (fused.size() != descs.rows() || fused.size() != centers.rows())
        throw ShapeError("select_key_patches: input lengths disagree");
    std::vector<Index> keep;
    for (Index i = 0; i < fused.size(); ++i)
        if (static_cast<double>(fused[i]) > tau) keep.push_back(i);
    Centers coords(static_cast<Index>(keep.size()), 2);
    MatX<T> rows(static_cast<Index>(keep.size()), descs.cols());
    for (Index i = 0; i < static_cast<Index>(keep.size()); ++i) {
        coords.row(i) = centers.row(keep[static_cast<std::size_t>(i)]);
        rows.row(i) = descs.row(keep[static_cast<std::size_t>(i)]);
    }
    return {std::move(coords), std::move(rows)};
}

namespace detail {

template <typename T>
void require_head_shape(const HeadParams<T>& p, AggVariant v, Index d) {
    const Index attn_rows = (v == AggVariant::standard || v == AggVariant::ml_satt) ? 3 * d : d;
    const Index attn_cols = (v == AggVariant::standard || v == AggVariant::plain) ? 3 : 1;
    const Index wg_rows = (v == AggVariant::sl_satt) ? d : 3 * d;
    if (p.attn.rows() != attn_rows || p.attn.cols() != attn_cols)
        throw ConfigError(std::string("head params for variant ") + to_string(v) +
                          " need attention shape " + std::to_string(attn_rows) + "x" +
                          std::to_string(attn_cols) + ", got " + std::to_string(p.attn.rows()) +
                          "x" + std::to_string(p.attn.cols()));
    if (p.wg.rows() != wg_rows || p.wg.cols() != d)
        throw ConfigError(std::string("head params for variant ") + to_string(v) +
                          " need reduction shape " + std::to_string(wg_rows) + "x" +
                          std::to_string(d));
}

} // namespace detail

// Full aggregation dispatch. Key-patch descriptors always come from the
// mid-level tokens; the thresholding mask is the variant's fused map.
template <typename T>
AggregateResult<T> aggregate(const MultiLevelTokens<T>& tokens, const HeadParams<T>& params,
                             const AggregateConfig& cfg, std::string id = {}) {
    const Index d = tokens.low.cols();
    detail::require_head_shape(params, cfg.variant, d);

    AttentionBundle<T> bundle;
    VecX<T> global;

    switch (cfg.variant) {
        case AggVariant::standard: {
            const MatX<T> p = concat_tokens(tokens.low, tokens.mid, tokens.high);
            bundle.a_low = attention_map<T>(p, params.attn.col(0));
            bundle.a_mid = attention_map<T>(p, params.attn.col(1));
            bundle.a_high = attention_map<T>(p, params.attn.col(2));
            bundle.fused = fuse_attention(bundle.a_low, bundle.a_mid, bundle.a_high);
            global = reduce_global<T>(level_global(bundle.a_low, tokens.low),
                                      level_global(bundle.a_mid, tokens.mid),
                                      level_global(bundle.a_high, tokens.high), params.wg);
            break;
        }
        case AggVariant::plain: {
            bundle.a_low = attention_map<T>(tokens.low, params.attn.col(0));
            bundle.a_mid = attention_map<T>(tokens.mid, params.attn.col(1));
            bundle.a_high = attention_map<T>(tokens.high, params.attn.col(2));
            bundle.fused = fuse_attention(bundle.a_low, bundle.a_mid, bundle.a_high);
            global = reduce_global<T>(level_global(bundle.a_low, tokens.low),
                                      level_global(bundle.a_mid, tokens.mid),
                                      level_global(bundle.a_high, tokens.high), params.wg);
            break;
        }
        case AggVariant::ml_satt: {
            const MatX<T> p = concat_tokens(tokens.low, tokens.mid, tokens.high);
            const VecX<T> a = attention_map<T>(p, params.attn.col(0));
            bundle.a_low = bundle.a_mid = bundle.a_high = a;
            bundle.fused = minmax_norm(a);
            const VecX<T> gstar = level_global(a, p); // 3D
            global = l2_normalize<T>(params.wg.transpose() * l2_normalize(gstar));
            break;
        }
        case AggVariant::sl_satt: {
            const VecX<T> a = attention_map<T>(tokens.high, params.attn.col(0));
            bundle.a_low = bundle.a_mid = bundle.a_high = a;
            bundle.fused = minmax_norm(a);
            const VecX<T> gstar = level_global(a, tokens.high);
            global = l2_normalize<T>(params.wg.transpose() * l2_normalize(gstar));
            break;
        }
    }

    AggregateResult<T> out;
    out.attention = bundle;
    out.descriptor.global = std::move(global);
    out.descriptor.id = std::move(id);
    out.descriptor.grid = tokens.grid;
    const double tau = cfg.keep_all_patches ? -1.0 : cfg.tau;
    auto [coords, descs] = select_key_patches(bundle.fused, tau, tokens.mid, tokens.centers);
    out.descriptor.key_coords = std::move(coords);
    out.descriptor.key_descs = std::move(descs);
    return out;
}

} // namespace tvpr
