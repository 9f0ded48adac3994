#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tvpr/aggregation.hpp"

namespace tvpr {

// Spatial verification between two key-patch sets: exact mutual
// nearest-neighbor matching, normalized-DLT homography fitting, and seeded
// RANSAC scoring by inlier count.

struct MatchPair {
    Index idx_a = 0, idx_b = 0;
    Eigen::Vector2d coord_a, coord_b;
    double dist = 0; // descriptor Euclidean distance
};

struct Homography {
    Eigen::Matrix3d h; // h(2,2) = 1, or unit Frobenius norm when h33 ~ 0
};

struct VerificationResult {
    int score = 0; // inlier count
    std::vector<char> inlier_mask; // one flag per input pair
    std::optional<Homography> h;
    bool degenerate = false;
};

struct RansacConfig {
    double reproj_thresh = 24.0; // pixels; 1.5 x the 16-px patch size
    int iterations = 500;
    double early_exit_ratio = 0.8;
    std::uint64_t seed = 0;
};

struct SpatialScoreConfig {
    RansacConfig ransac;
    std::uint64_t base_seed = 0; // mixed with the unordered id pair
};

// Exact brute-force cross-checked matching. A pair is kept iff each side is
// the other's nearest neighbor; distance ties resolve to the lowest index.
// Result is ordered by idx_a.
std::vector<MatchPair> mutual_nn_match(const MatXf& descs_a, const Centers& coords_a,
                                       const MatXf& descs_b, const Centers& coords_b);

// Normalized DLT: Hartley-normalize both sides, take the least-singular
// direction of the 2n x 9 design matrix, de-normalize. Throws DegeneracyError
// for under-determined or collinear configurations.
Homography estimate_homography(const std::vector<MatchPair>& pairs);

// Forward reprojection error ||proj(H, a) - b||, infinite when the
// homogeneous divide is unstable (|w| < 1e-9).
double reprojection_error(const Homography& h, const Eigen::Vector2d& a,
                          const Eigen::Vector2d& b);

// Seeded RANSAC over 4-point samples with final least-squares refit on the
// best consensus set. Deterministic in (pairs, seed); invariant to the order
// pairs arrive in (they are canonically sorted before sampling).
VerificationResult ransac_verify(const std::vector<MatchPair>& pairs, const RansacConfig& cfg);

// Match + verify for an image pair. The pair is canonicalized by id so the
// score is exactly symmetric, and the RANSAC seed derives from the unordered
// id pair.
VerificationResult spatial_score(const ImageDescriptor& a, const ImageDescriptor& b,
                                 const SpatialScoreConfig& cfg);

} // namespace tvpr
