#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tvpr/matcher.hpp"

namespace tvpr {

// Two-stage retrieval: exact global nearest-neighbor search over an immutable
// descriptor index, spatial re-ranking of the candidates, and the evaluation
// metrics (Recall@N, pose-tolerance recall) plus storage accounting.

struct PoseRpy {
    double x = 0, y = 0, z = 0;          // meters
    double yaw = 0, pitch = 0, roll = 0; // degrees, applied Z-Y-X
};

struct PlaceTag {
    std::string id;
    double easting_m = 0, northing_m = 0;
    std::optional<double> heading_deg;
    std::optional<PoseRpy> pose;
};

struct IndexEntry {
    ImageDescriptor descriptor;
    PlaceTag tag;
};

// Immutable after build; insertion order is the tie-breaking order everywhere.
class DescriptorIndex {
public:
    static DescriptorIndex build(std::vector<IndexEntry> entries);

    const std::vector<IndexEntry>& entries() const { return entries_; }
    Index size() const { return static_cast<Index>(entries_.size()); }
    const MatXf& globals() const { return globals_; }

private:
    std::vector<IndexEntry> entries_;
    MatXf globals_; // E x D
};

struct Candidate {
    Index entry = 0;       // index into DescriptorIndex entries
    double distance = 0;   // Euclidean distance between unit globals
};

struct RankedCandidate {
    Index entry = 0;
    double distance = 0;
    int spatial_score = 0;
};

struct QueryOutcome {
    std::string query_id;
    std::vector<Candidate> global_ranking;
    std::vector<RankedCandidate> reranked; // empty when re-ranking was skipped
};

struct RecallReport {
    std::vector<int> n_list;
    std::vector<double> values; // one per N, non-decreasing
    double radius_m = 0;
    Index query_count = 0;
};

struct PoseTolerance {
    double translation_m = 0;
    double rotation_deg = 0;
};

struct MemoryEntry {
    std::string id;
    std::size_t header_bytes = 0;
    std::size_t global_bytes = 0;
    std::size_t coord_bytes = 0;
    std::size_t patch_bytes = 0;
    std::size_t total() const { return header_bytes + global_bytes + coord_bytes + patch_bytes; }
};

struct MemoryReport {
    std::vector<MemoryEntry> per_image;
    std::size_t container_bytes = 0; // store-level header
    std::size_t total_bytes = 0;
};

// Exact top-K by Euclidean distance, ascending, ties by insertion order.
std::vector<Candidate> global_topk(const DescriptorIndex& index, const VecXf& query_global,
                                   int k);

// Re-orders candidates by spatial score (descending), breaking ties by global
// distance then insertion order. The result is a permutation of the input.
std::vector<RankedCandidate> rerank(const ImageDescriptor& query, const DescriptorIndex& index,
                                    const std::vector<Candidate>& candidates,
                                    const SpatialScoreConfig& cfg);

// Fraction of queries whose top-N (of the final ranking) contains an entry
// within radius_m of the query's ground-truth planar position.
RecallReport recall_at_n(const std::vector<QueryOutcome>& outcomes,
                         const std::unordered_map<std::string, PlaceTag>& query_tags,
                         const DescriptorIndex& index, double radius_m,
                         const std::vector<int>& n_list);

// Per-tolerance fraction of queries whose top-1 reference pose lies within
// both the translation and rotation bounds.
std::vector<double> pose_recall(const std::vector<QueryOutcome>& outcomes,
                                const std::unordered_map<std::string, PlaceTag>& query_tags,
                                const DescriptorIndex& index,
                                const std::vector<PoseTolerance>& tolerances);

// Angle of the relative rotation between two Z-Y-X Euler poses, in [0, 180].
double rotation_angle_deg(const PoseRpy& a, const PoseRpy& b);

MemoryReport memory_report(const DescriptorIndex& index);

// Byte-accounting helpers shared with the descriptor store serializer.
std::size_t descriptor_header_bytes(const ImageDescriptor& d);
std::size_t descriptor_payload_bytes(const ImageDescriptor& d);
inline constexpr std::size_t kStoreHeaderBytes = 16; // magic + version + count + dim

} // namespace tvpr
