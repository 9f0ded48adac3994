#include "tvpr/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SVD>

#include "tvpr/rng.hpp"

namespace tvpr {

namespace {

// Sequential double-accumulation squared distance; the exactness contract of
// mutual_nn_match depends on every caller computing distances the same way.
double sq_dist(const float* a, const float* b, Index d) {
    double acc = 0;
    for (Index i = 0; i < d; ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc;
}

std::vector<Index> nearest_rows(const MatXf& from, const MatXf& to) {
    std::vector<Index> nn(static_cast<std::size_t>(from.rows()), -1);
    const Index d = from.cols();
    for (Index i = 0; i < from.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        Index best_j = -1;
        for (Index j = 0; j < to.rows(); ++j) {
            const double dist = sq_dist(from.data() + i * d, to.data() + j * d, d);
            if (dist < best) {
                best = dist;
                best_j = j;
            }
        }
        nn[static_cast<std::size_t>(i)] = best_j;
    }
    return nn;
}

} // namespace

std::vector<MatchPair> mutual_nn_match(const MatXf& descs_a, const Centers& coords_a,
                                       const MatXf& descs_b, const Centers& coords_b) {
    if (descs_a.rows() != coords_a.rows() || descs_b.rows() != coords_b.rows())
        throw ShapeError("mutual_nn_match: descriptor and coordinate counts differ");
    std::vector<MatchPair> out;
    if (descs_a.rows() == 0 || descs_b.rows() == 0) return out;
    if (descs_a.cols() != descs_b.cols())
        throw ShapeError("mutual_nn_match: descriptor dims differ");

    const std::vector<Index> ab = nearest_rows(descs_a, descs_b);
    const std::vector<Index> ba = nearest_rows(descs_b, descs_a);

    const Index d = descs_a.cols();
    for (Index i = 0; i < descs_a.rows(); ++i) {
        const Index j = ab[static_cast<std::size_t>(i)];
        if (j >= 0 && ba[static_cast<std::size_t>(j)] == i) {
            MatchPair p;
            p.idx_a = i;
            p.idx_b = j;
            p.coord_a = Eigen::Vector2d(coords_a(i, 0), coords_a(i, 1));
            p.coord_b = Eigen::Vector2d(coords_b(j, 0), coords_b(j, 1));
            p.dist = std::sqrt(sq_dist(descs_a.data() + i * d, descs_b.data() + j * d, d));
            out.push_back(p);
        }
    }
    return out; // already sorted by idx_a
}

namespace {

struct NormalizedPoints {
    std::vector<Eigen::Vector2d> pts;
    Eigen::Matrix3d transform; // maps raw -> normalized
};

// Hartley normalization: centroid to origin, mean distance sqrt(2).
NormalizedPoints hartley_normalize(const std::vector<MatchPair>& pairs, bool source) {
    NormalizedPoints out;
    out.pts.reserve(pairs.size());
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    for (const auto& p : pairs) centroid += source ? p.coord_a : p.coord_b;
    centroid /= static_cast<double>(pairs.size());

    double mean_dist = 0;
    for (const auto& p : pairs)
        mean_dist += ((source ? p.coord_a : p.coord_b) - centroid).norm();
    mean_dist /= static_cast<double>(pairs.size());
    if (mean_dist < 1e-12)
        throw DegeneracyError("all points coincide; homography undetermined");
    const double scale = std::sqrt(2.0) / mean_dist;

    out.transform << scale, 0, -scale * centroid.x(), 0, scale, -scale * centroid.y(), 0, 0, 1;
    for (const auto& p : pairs)
        out.pts.push_back(((source ? p.coord_a : p.coord_b) - centroid) * scale);
    return out;
}

bool has_collinear_triple(const std::vector<Eigen::Vector2d>& pts, double tol) {
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i + 2 < n; ++i)
        for (std::size_t j = i + 1; j + 1 < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                const Eigen::Vector2d u = pts[j] - pts[i];
                const Eigen::Vector2d v = pts[k] - pts[i];
                if (std::abs(u.x() * v.y() - u.y() * v.x()) * 0.5 <= tol) return true;
            }
    return false;
}

} // namespace

Homography estimate_homography(const std::vector<MatchPair>& pairs) {
    const Index n = static_cast<Index>(pairs.size());
    if (n < 4) throw DegeneracyError("homography needs at least 4 correspondences");

    const NormalizedPoints src = hartley_normalize(pairs, true);
    const NormalizedPoints dst = hartley_normalize(pairs, false);

    // Collinearity is fatal for a minimal sample; larger least-squares sets
    // are screened by the conditioning checks below instead (the full triple
    // scan is cubic in n).
    if (n == 4 && has_collinear_triple(src.pts, 1e-6))
        throw DegeneracyError("3 of the 4 source points are collinear");

    MatXd a(2 * n, 9);
    for (Index i = 0; i < n; ++i) {
        const Eigen::Vector2d& s = src.pts[static_cast<std::size_t>(i)];
        const Eigen::Vector2d& t = dst.pts[static_cast<std::size_t>(i)];
        a.row(2 * i) << 0, 0, 0, -s.x(), -s.y(), -1, t.y() * s.x(), t.y() * s.y(), t.y();
        a.row(2 * i + 1) << s.x(), s.y(), 1, 0, 0, 0, -t.x() * s.x(), -t.x() * s.y(), -t.x();
    }

    Eigen::JacobiSVD<MatXd> svd(a, Eigen::ComputeFullV);
    const VecXd h = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];

    Eigen::Matrix3d result = dst.transform.inverse() * hn * src.transform;
    const double det = result.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-12)
        throw DegeneracyError("estimated homography is singular");

    if (std::abs(result(2, 2)) > 1e-8) {
        result /= result(2, 2);
    } else {
        result /= result.norm();
        // fix the sign deterministically
        for (Index i = 0; i < 9; ++i) {
            const double v = result(i / 3, i % 3);
            if (std::abs(v) > 1e-12) {
                if (v < 0) result = -result;
                break;
            }
        }
    }
    return Homography{result};
}

double reprojection_error(const Homography& h, const Eigen::Vector2d& a,
                          const Eigen::Vector2d& b) {
    const Eigen::Vector3d p = h.h * Eigen::Vector3d(a.x(), a.y(), 1.0);
    if (std::abs(p.z()) < 1e-9) return std::numeric_limits<double>::infinity();
    return (p.head<2>() / p.z() - b).norm();
}

namespace {

int count_inliers(const Homography& h, const std::vector<MatchPair>& pairs, double thresh,
                  std::vector<char>& mask) {
    int count = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const bool in = reprojection_error(h, pairs[i].coord_a, pairs[i].coord_b) <= thresh;
        mask[i] = in ? 1 : 0;
        count += in ? 1 : 0;
    }
    return count;
}

} // namespace

VerificationResult ransac_verify(const std::vector<MatchPair>& pairs, const RansacConfig& cfg) {
    if (cfg.reproj_thresh <= 0) throw ValidationError("reprojection threshold must be positive");
    if (cfg.iterations < 1) throw ValidationError("RANSAC needs at least one iteration");

    VerificationResult result;
    result.inlier_mask.assign(pairs.size(), 0);
    const Index n = static_cast<Index>(pairs.size());
    if (n < 4) return result; // score 0 by convention

    // Sampling sees pairs in canonical (idx_a, idx_b) order so the score does
    // not depend on input permutation; masks are scattered back at the end.
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    std::sort(order.begin(), order.end(), [&](Index x, Index y) {
        const auto& a = pairs[static_cast<std::size_t>(x)];
        const auto& b = pairs[static_cast<std::size_t>(y)];
        return a.idx_a != b.idx_a ? a.idx_a < b.idx_a : a.idx_b < b.idx_b;
    });
    std::vector<MatchPair> sorted;
    sorted.reserve(pairs.size());
    for (Index i : order) sorted.push_back(pairs[static_cast<std::size_t>(i)]);

    Rng rng(cfg.seed);
    std::vector<char> mask(pairs.size(), 0);
    std::vector<char> best_mask;
    int best_count = -1;
    Homography best_h;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        bool fitted = false;
        Homography h;
        for (int attempt = 0; attempt < 32 && !fitted; ++attempt) {
            Index pick[4];
            for (int k = 0; k < 4; ++k) {
                for (;;) {
                    const Index c = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(n)));
                    bool dup = false;
                    for (int m = 0; m < k; ++m) dup |= (pick[m] == c);
                    if (!dup) {
                        pick[k] = c;
                        break;
                    }
                }
            }
            std::vector<MatchPair> sample = {sorted[static_cast<std::size_t>(pick[0])],
                                             sorted[static_cast<std::size_t>(pick[1])],
                                             sorted[static_cast<std::size_t>(pick[2])],
                                             sorted[static_cast<std::size_t>(pick[3])]};
            try {
                h = estimate_homography(sample);
                fitted = true;
            } catch (const DegeneracyError&) {
            }
        }
        if (!fitted) continue;

        const int count = count_inliers(h, sorted, cfg.reproj_thresh, mask);
        if (count > best_count) {
            best_count = count;
            best_mask = mask;
            best_h = h;
        }
        if (best_count > cfg.early_exit_ratio * static_cast<double>(n)) break;
    }

    if (best_count < 0) {
        result.degenerate = true;
        return result;
    }

    // Least-squares refit on the best consensus set, then a final recount.
    if (best_count >= 4) {
        std::vector<MatchPair> consensus;
        for (std::size_t i = 0; i < sorted.size(); ++i)
            if (best_mask[i]) consensus.push_back(sorted[i]);
        try {
            const Homography refit = estimate_homography(consensus);
            const int recount = count_inliers(refit, sorted, cfg.reproj_thresh, mask);
            best_count = recount;
            best_mask = mask;
            best_h = refit;
        } catch (const DegeneracyError&) {
            // keep the minimal-sample model
        }
    }

    result.score = best_count;
    result.h = best_h;
    for (std::size_t i = 0; i < order.size(); ++i)
        result.inlier_mask[static_cast<std::size_t>(order[i])] = best_mask[i];
    return result;
}

VerificationResult spatial_score(const ImageDescriptor& a, const ImageDescriptor& b,
                                 const SpatialScoreConfig& cfg) {
    // Canonical orientation by id makes the score exactly symmetric.
    const ImageDescriptor* first = &a;
    const ImageDescriptor* second = &b;
    if (second->id < first->id) std::swap(first, second);

    std::uint64_t seed = cfg.base_seed;
    seed = fnv1a64(first->id.data(), first->id.size(), seed ^ 0x9e3779b97f4a7c15ULL);
    seed = fnv1a64(second->id.data(), second->id.size(), seed);

    const std::vector<MatchPair> pairs =
        mutual_nn_match(first->key_descs, first->key_coords, second->key_descs,
                        second->key_coords);
    RansacConfig rc = cfg.ransac;
    rc.seed = seed;
    return ransac_verify(pairs, rc);
}

} // namespace tvpr
