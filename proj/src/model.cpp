#include "tvpr/model.hpp"

#include <cmath>

#include "tvpr/rng.hpp"

namespace tvpr {

const HeadParams<float>& ModelWeights::head(AggVariant v) const {
    auto it = heads.find(v);
    if (it == heads.end())
        throw ConfigError(std::string("weights carry no head for variant ") + to_string(v));
    return it->second;
}

namespace {

MatXf gaussian_matrix(Rng& rng, Index rows, Index cols, double stddev) {
    MatXf m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<float>(rng.normal() * stddev);
    return m;
}

Tensorf gaussian_tensor(Rng& rng, std::vector<Index> shape, double stddev) {
    Tensorf t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal() * stddev);
    return t;
}

double xavier(Index fan_in, Index fan_out) {
    return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

} // namespace

ModelWeights init_model(const ModelConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    ModelWeights w;
    w.config = config;
    const Index d = config.dim;
    const Index d4 = d / 4;

    w.backbone.input_mean = Eigen::Map<const Eigen::Vector3f>(config.input_mean.data());
    w.backbone.input_std = Eigen::Map<const Eigen::Vector3f>(config.input_std.data());

    Index cin = 3;
    for (int i = 0; i < 4; ++i) {
        const Index cout = config.channels[static_cast<std::size_t>(i)];
        auto& blk = w.backbone.blocks[static_cast<std::size_t>(i)];
        // He init for conv feeding ReLU
        blk.kernel = gaussian_tensor(rng, {3, 3, cin, cout},
                                     std::sqrt(2.0 / static_cast<double>(9 * cin)));
        blk.bn_mean = VecXf::Zero(cout);
        blk.bn_var = VecXf::Ones(cout);
        blk.bn_gamma = VecXf::Ones(cout);
        blk.bn_beta = VecXf::Zero(cout);
        cin = cout;
    }
    for (int i = 0; i < 4; ++i) {
        const Index r = patch_resolution(i + 1);
        const Index flat = r * r * config.channels[static_cast<std::size_t>(i)];
        w.backbone.embed[static_cast<std::size_t>(i)] =
            gaussian_matrix(rng, flat, d4, xavier(flat, d4));
    }

    w.encoder.heads = config.heads;
    const Index hidden = d * config.mlp_ratio;
    for (int l = 0; l < config.layers; ++l) {
        EncoderLayerWeights<float> layer;
        layer.ln1_gamma = VecXf::Ones(d);
        layer.ln1_beta = VecXf::Zero(d);
        layer.msa.wq = gaussian_matrix(rng, d, d, xavier(d, d));
        layer.msa.wk = gaussian_matrix(rng, d, d, xavier(d, d));
        layer.msa.wv = gaussian_matrix(rng, d, d, xavier(d, d));
        layer.msa.wo = gaussian_matrix(rng, d, d, xavier(d, d));
        layer.msa.bq = VecXf::Zero(d);
        layer.msa.bk = VecXf::Zero(d);
        layer.msa.bv = VecXf::Zero(d);
        layer.msa.bo = VecXf::Zero(d);
        layer.ln2_gamma = VecXf::Ones(d);
        layer.ln2_beta = VecXf::Zero(d);
        layer.mlp_w1 = gaussian_matrix(rng, d, hidden, xavier(d, hidden));
        layer.mlp_b1 = VecXf::Zero(hidden);
        layer.mlp_w2 = gaussian_matrix(rng, hidden, d, xavier(hidden, d));
        layer.mlp_b2 = VecXf::Zero(d);
        w.encoder.layers.push_back(std::move(layer));
    }
    if (config.with_class_token)
        w.encoder.class_token = gaussian_matrix(rng, d, 1, 0.02).col(0);

    // Attention projections start small so softmax maps begin near-uniform.
    const double attn_std = 0.01;
    w.heads[AggVariant::standard] = {gaussian_matrix(rng, 3 * d, 3, attn_std),
                                     gaussian_matrix(rng, 3 * d, d, xavier(3 * d, d))};
    w.heads[AggVariant::plain] = {gaussian_matrix(rng, d, 3, attn_std),
                                  gaussian_matrix(rng, 3 * d, d, xavier(3 * d, d))};
    w.heads[AggVariant::ml_satt] = {gaussian_matrix(rng, 3 * d, 1, attn_std),
                                    gaussian_matrix(rng, 3 * d, d, xavier(3 * d, d))};
    w.heads[AggVariant::sl_satt] = {gaussian_matrix(rng, d, 1, attn_std),
                                    gaussian_matrix(rng, d, d, xavier(d, d))};
    return w;
}

void validate_model(const ModelWeights& w) {
    const ModelConfig& c = w.config;
    const Index d = c.dim;
    if (d % 4 != 0) throw ShapeError("token dim must be divisible by 4");
    if (static_cast<int>(w.encoder.layers.size()) != c.layers)
        throw ShapeError("encoder layer count " + std::to_string(w.encoder.layers.size()) +
                         " does not match config " + std::to_string(c.layers));

    Index cin = 3;
    for (int i = 0; i < 4; ++i) {
        const auto& blk = w.backbone.blocks[static_cast<std::size_t>(i)];
        const Index cout = c.channels[static_cast<std::size_t>(i)];
        if (blk.kernel.rank() != 4 || blk.kernel.extent(0) != 3 || blk.kernel.extent(1) != 3 ||
            blk.kernel.extent(2) != cin || blk.kernel.extent(3) != cout)
            throw ShapeError("conv kernel " + std::to_string(i + 1) + " has unexpected shape");
        if (blk.bn_mean.size() != cout || blk.bn_var.size() != cout ||
            blk.bn_gamma.size() != cout || blk.bn_beta.size() != cout)
            throw ShapeError("batch-norm stats " + std::to_string(i + 1) + " have wrong length");
        const Index r = patch_resolution(i + 1);
        const auto& proj = w.backbone.embed[static_cast<std::size_t>(i)];
        if (proj.rows() != r * r * cout || proj.cols() != d / 4)
            throw ShapeError("patch projection " + std::to_string(i + 1) + " has wrong shape");
        cin = cout;
    }
    for (const auto& layer : w.encoder.layers) {
        if (layer.msa.wq.rows() != d || layer.mlp_w1.rows() != d ||
            layer.mlp_w1.cols() != d * c.mlp_ratio || layer.mlp_w2.cols() != d)
            throw ShapeError("encoder layer weights inconsistent with dim " + std::to_string(d));
    }
    for (const auto& [variant, params] : w.heads)
        detail::require_head_shape(params, variant, d);
    for (int t : c.taps)
        if (t < 1 || t > c.layers) throw ShapeError("tap index outside encoder depth");
}

} // namespace tvpr
