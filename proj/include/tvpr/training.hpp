#pragma once

#include <cstdint>
#include <vector>

#include "tvpr/aggregation.hpp"
#include "tvpr/retrieval.hpp"

namespace tvpr {

// Head-only training: triplet margin loss over global descriptors with exact
// reverse-mode gradients for the attention projections and the reduction
// matrix, under a frozen backbone. Everything here runs in double precision;
// the trained head is cast back to float when written out.

// Forward intermediates of the standard-variant global descriptor, kept for
// the backward pass and for tests that probe the tail of the computation.
struct GlobalForward {
    MatXd concat;                 // N x 3D
    std::array<VecXd, 3> attn;    // per-level maps (length N)
    std::array<VecXd, 3> level_g; // G_L, G_M, G_H (length D)
    VecXd gstar;                  // 3D, pre-normalization concat
    VecXd unit;                   // gstar / |gstar|
    VecXd projected;              // wg^T unit (length D)
    VecXd global;                 // unit-norm output
};

struct HeadGrad {
    MatXd attn; // 3D x 3
    MatXd wg;   // 3D x D

    void setZero(Index d3, Index d) {
        attn = MatXd::Zero(d3, 3);
        wg = MatXd::Zero(d3, d);
    }
};

// Indices into a token cache; one triplet per (query, positive, negative).
struct TripletIdx {
    Index query = 0, positive = 0, negative = 0;
};

enum class MiningMode { weak, heading };

struct MiningConfig {
    MiningMode mode = MiningMode::weak;
    double radius_pos_m = 10.0;
    double radius_neg_m = 25.0;
    int n_neg = 2;
};

struct MiningResult {
    std::vector<TripletIdx> triplets;
    Index skipped_queries = 0; // queries with no in-radius positive candidate
};

struct TrainConfig {
    double margin = 0.1;
    double learning_rate = 1e-3;
    int epochs = 10;
    int batch_size = 8;
    std::uint64_t seed = 0;
    MiningConfig mining;
};

// Adam-style moment accumulators for the head parameters.
struct OptimState {
    MatXd m_attn, v_attn, m_wg, v_wg;
    std::int64_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void init(Index d3, Index d);
    void apply(HeadParams<double>& params, const HeadGrad& grad, double lr);
};

struct TrainResult {
    HeadParams<double> params;
    std::vector<double> loss_trace; // mean loss per epoch
    Index skipped_queries = 0;      // from the final epoch's mining pass
};

GlobalForward forward_global(const MultiLevelTokens<double>& tokens,
                             const HeadParams<double>& params);

// Accumulates into `grad` the gradient contribution of one descriptor given
// dL/dG. Token gradients are not propagated (frozen backbone).
void backward_global(const GlobalForward& fwd, const MultiLevelTokens<double>& tokens,
                     const HeadParams<double>& params, const VecXd& dglobal, HeadGrad& grad);

// Hinge on Euclidean distances: max(d(q,p) - d(q,n) + m, 0).
double triplet_loss(const VecXd& gq, const VecXd& gp, const VecXd& gn, double margin);

// Loss and exact head gradients for one triplet of frozen token sets.
double head_grad(const MultiLevelTokens<double>& query, const MultiLevelTokens<double>& positive,
                 const MultiLevelTokens<double>& negative, const HeadParams<double>& params,
                 double margin, HeadGrad& grad);

// Triplet mining over current global descriptors.
//  - weak mode: positive is the in-radius entry with the closest descriptor.
//  - heading mode: positive is the in-radius entry with the smallest heading
//    difference.
// Negatives are the n_neg descriptor-nearest entries farther than radius_neg.
MiningResult mine_triplets(const MatXd& globals, const std::vector<PlaceTag>& tags,
                           const MiningConfig& cfg);

// Epochs of mine -> shuffle -> batched gradient steps. Pure in
// (dataset, config, seed); aborts with ValidationError if the loss diverges.
TrainResult train_head(const std::vector<MultiLevelTokens<double>>& dataset,
                       const std::vector<PlaceTag>& tags, const HeadParams<double>& initial,
                       const TrainConfig& cfg);

} // namespace tvpr
