#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "tvpr/aggregation.hpp"
#include "tvpr/backbone.hpp"
#include "tvpr/encoder.hpp"

namespace tvpr {

// Fixed architecture constants: token dim 256 built from four 64-wide level
// embeddings, channel schedule 64/128/256/512, six encoder layers tapped at
// depths 2/4/6.
struct ModelConfig {
    int dim = 256;
    int layers = 6;
    int heads = 8;
    int mlp_ratio = 4;
    std::array<int, 4> channels{64, 128, 256, 512};
    std::array<int, 3> taps{2, 4, 6};
    float tau = 0.02f;
    std::array<float, 3> input_mean{0.5f, 0.5f, 0.5f};
    std::array<float, 3> input_std{0.5f, 0.5f, 0.5f};
    bool with_class_token = false;
};

struct ModelWeights {
    ModelConfig config;
    BackboneWeights<float> backbone;
    EncoderWeights<float> encoder;
    std::map<AggVariant, HeadParams<float>> heads;

    const HeadParams<float>& head(AggVariant v) const;
};

// Scaled-Gaussian initialization of every parameter from one seeded stream.
// Norm affines start as identity, batch-norm statistics as (0, 1).
ModelWeights init_model(const ModelConfig& config, std::uint64_t seed);

// Structural consistency check (shapes against config); throws ShapeError.
void validate_model(const ModelWeights& w);

} // namespace tvpr
