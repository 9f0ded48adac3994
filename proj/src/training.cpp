#include "tvpr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tvpr/rng.hpp"

namespace tvpr {

GlobalForward forward_global(const MultiLevelTokens<double>& tokens,
                             const HeadParams<double>& params) {
    const Index d = tokens.low.cols();
    detail::require_head_shape(params, AggVariant::standard, d);

    GlobalForward f;
    f.concat = concat_tokens(tokens.low, tokens.mid, tokens.high);
    const MatX<double>* levels[3] = {&tokens.low, &tokens.mid, &tokens.high};
    for (int i = 0; i < 3; ++i) {
        f.attn[i] = softmax<double>(f.concat * params.attn.col(i));
        f.level_g[i] = levels[i]->transpose() * f.attn[i];
    }
    f.gstar.resize(3 * d);
    f.gstar << f.level_g[0], f.level_g[1], f.level_g[2];
    f.unit = l2_normalize(f.gstar);
    f.projected = params.wg.transpose() * f.unit;
    f.global = l2_normalize(f.projected);
    return f;
}

namespace {

// d/dx of x/|x| applied to an incoming gradient: (g - u (u.g)) / |x|.
VecXd normalize_backward(const VecXd& unit, double norm, const VecXd& grad) {
    return (grad - unit * unit.dot(grad)) / norm;
}

} // namespace

void backward_global(const GlobalForward& f, const MultiLevelTokens<double>& tokens,
                     const HeadParams<double>& params, const VecXd& dglobal, HeadGrad& grad) {
    const Index d = tokens.low.cols();

    const VecXd dproj = normalize_backward(f.global, f.projected.norm(), dglobal);
    grad.wg.noalias() += f.unit * dproj.transpose();
    const VecXd dunit = params.wg * dproj;
    const VecXd dgstar = normalize_backward(f.unit, f.gstar.norm(), dunit);

    const MatX<double>* levels[3] = {&tokens.low, &tokens.mid, &tokens.high};
    for (int i = 0; i < 3; ++i) {
        const VecXd dlevel = dgstar.segment(i * d, d);
        const VecXd dattn = (*levels[i]) * dlevel;
        // softmax backward: a .* (g - <a, g>)
        const double inner = f.attn[i].dot(dattn);
        const VecXd dlogits = (f.attn[i].array() * (dattn.array() - inner)).matrix();
        grad.attn.col(i).noalias() += f.concat.transpose() * dlogits;
    }
}

double triplet_loss(const VecXd& gq, const VecXd& gp, const VecXd& gn, double margin) {
    if (margin < 0) throw ValidationError("triplet margin must be non-negative");
    return std::max((gq - gp).norm() - (gq - gn).norm() + margin, 0.0);
}

double head_grad(const MultiLevelTokens<double>& query, const MultiLevelTokens<double>& positive,
                 const MultiLevelTokens<double>& negative, const HeadParams<double>& params,
                 double margin, HeadGrad& grad) {
    const GlobalForward fq = forward_global(query, params);
    const GlobalForward fp = forward_global(positive, params);
    const GlobalForward fn = forward_global(negative, params);

    const VecXd qp = fq.global - fp.global;
    const VecXd qn = fq.global - fn.global;
    const double dqp = qp.norm(), dqn = qn.norm();
    const double loss = dqp - dqn + margin;
    if (loss <= 0) return 0.0; // hinge inactive (boundary convention: zero gradient)

    VecXd dgq = VecXd::Zero(fq.global.size());
    VecXd dgp = VecXd::Zero(fq.global.size());
    VecXd dgn = VecXd::Zero(fq.global.size());
    if (dqp > 0) {
        dgq += qp / dqp;
        dgp -= qp / dqp;
    }
    if (dqn > 0) {
        dgq -= qn / dqn;
        dgn += qn / dqn;
    }

    backward_global(fq, query, params, dgq, grad);
    backward_global(fp, positive, params, dgp, grad);
    backward_global(fn, negative, params, dgn, grad);
    return loss;
}

MiningResult mine_triplets(const MatXd& globals, const std::vector<PlaceTag>& tags,
                           const MiningConfig& cfg) {
    if (globals.rows() != static_cast<Index>(tags.size()))
        throw ShapeError("mine_triplets: descriptor and tag counts differ");
    const Index n = globals.rows();
    MiningResult result;

    auto geo_dist = [&](Index a, Index b) {
        const double dx = tags[static_cast<std::size_t>(a)].easting_m -
                          tags[static_cast<std::size_t>(b)].easting_m;
        const double dy = tags[static_cast<std::size_t>(a)].northing_m -
                          tags[static_cast<std::size_t>(b)].northing_m;
        return std::sqrt(dx * dx + dy * dy);
    };
    auto desc_dist = [&](Index a, Index b) {
        return (globals.row(a) - globals.row(b)).norm();
    };

    for (Index q = 0; q < n; ++q) {
        // positive: best in-radius candidate under the mode's criterion
        Index best_pos = -1;
        double best_key = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < n; ++c) {
            if (c == q || geo_dist(q, c) > cfg.radius_pos_m) continue;
            double key;
            if (cfg.mode == MiningMode::heading) {
                if (!tags[static_cast<std::size_t>(q)].heading_deg ||
                    !tags[static_cast<std::size_t>(c)].heading_deg)
                    throw ValidationError("heading-based mining needs heading for every record");
                double diff = std::abs(*tags[static_cast<std::size_t>(q)].heading_deg -
                                       *tags[static_cast<std::size_t>(c)].heading_deg);
                diff = std::fmod(diff, 360.0);
                key = diff > 180.0 ? 360.0 - diff : diff;
            } else {
                key = desc_dist(q, c);
            }
            if (key < best_key) {
                best_key = key;
                best_pos = c;
            }
        }
        if (best_pos < 0) {
            ++result.skipped_queries;
            continue;
        }

        // negatives: n_neg descriptor-nearest beyond the negative radius
        std::vector<Index> candidates;
        for (Index c = 0; c < n; ++c)
            if (c != q && geo_dist(q, c) > cfg.radius_neg_m) candidates.push_back(c);
        std::stable_sort(candidates.begin(), candidates.end(),
                         [&](Index a, Index b) { return desc_dist(q, a) < desc_dist(q, b); });
        const std::size_t take =
            std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(cfg.n_neg));
        for (std::size_t i = 0; i < take; ++i)
            result.triplets.push_back({q, best_pos, candidates[i]});
    }
    return result;
}

void OptimState::init(Index d3, Index d) {
    m_attn = MatXd::Zero(d3, 3);
    v_attn = MatXd::Zero(d3, 3);
    m_wg = MatXd::Zero(d3, d);
    v_wg = MatXd::Zero(d3, d);
    step = 0;
}

void OptimState::apply(HeadParams<double>& params, const HeadGrad& grad, double lr) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    auto update = [&](MatXd& p, MatXd& m, MatXd& v, const MatXd& g) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    };
    update(params.attn, m_attn, v_attn, grad.attn);
    update(params.wg, m_wg, v_wg, grad.wg);
}

TrainResult train_head(const std::vector<MultiLevelTokens<double>>& dataset,
                       const std::vector<PlaceTag>& tags, const HeadParams<double>& initial,
                       const TrainConfig& cfg) {
    if (dataset.empty()) throw ValidationError("training dataset is empty");
    if (dataset.size() != tags.size())
        throw ValidationError("dataset and tag counts differ");
    if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");

    const Index d = dataset.front().low.cols();
    TrainResult result;
    result.params = initial;
    OptimState opt;
    opt.init(3 * d, d);

    Rng rng(cfg.seed);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        MatXd globals(static_cast<Index>(dataset.size()), d);
        for (std::size_t i = 0; i < dataset.size(); ++i)
            globals.row(static_cast<Index>(i)) =
                forward_global(dataset[i], result.params).global.transpose();

        MiningResult mined = mine_triplets(globals, tags, cfg.mining);
        result.skipped_queries = mined.skipped_queries;
        if (mined.triplets.empty())
            throw ValidationError("mining produced no triplets (" +
                                  std::to_string(mined.skipped_queries) + " queries skipped)");

        // Fisher-Yates with the seeded stream
        std::vector<TripletIdx>& trip = mined.triplets;
        for (std::size_t i = trip.size(); i > 1; --i)
            std::swap(trip[i - 1], trip[rng.bounded(i)]);

        double epoch_loss = 0;
        std::size_t seen = 0;
        for (std::size_t b0 = 0; b0 < trip.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t b1 =
                std::min(trip.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
            HeadGrad grad;
            grad.setZero(3 * d, d);
            double batch_loss = 0;
            for (std::size_t t = b0; t < b1; ++t) {
                batch_loss += head_grad(dataset[static_cast<std::size_t>(trip[t].query)],
                                        dataset[static_cast<std::size_t>(trip[t].positive)],
                                        dataset[static_cast<std::size_t>(trip[t].negative)],
                                        result.params, cfg.margin, grad);
            }
            const double scale = 1.0 / static_cast<double>(b1 - b0);
            grad.attn *= scale;
            grad.wg *= scale;
            if (!std::isfinite(batch_loss))
                throw ValidationError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch));
            opt.apply(result.params, grad, cfg.learning_rate);
            epoch_loss += batch_loss;
            seen += b1 - b0;
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(seen));
    }
    return result;
}

} // namespace tvpr
