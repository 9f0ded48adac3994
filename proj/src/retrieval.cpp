#include "tvpr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tvpr/parallel.hpp"

namespace tvpr {

DescriptorIndex DescriptorIndex::build(std::vector<IndexEntry> entries) {
    std::unordered_set<std::string> seen;
    for (const auto& e : entries) {
        if (e.descriptor.id != e.tag.id)
            throw ValidationError("descriptor/tag id mismatch for '" + e.descriptor.id + "'");
        if (!seen.insert(e.tag.id).second)
            throw ValidationError("duplicate id '" + e.tag.id + "' in index");
        const double norm = e.descriptor.global.cast<double>().norm();
        if (std::abs(norm - 1.0) > 1e-5)
            throw ValidationError("global descriptor of '" + e.tag.id +
                                  "' is not unit-norm (|g| = " + std::to_string(norm) + ")");
    }
    DescriptorIndex index;
    if (!entries.empty()) {
        const Index d = entries.front().descriptor.global.size();
        index.globals_.resize(static_cast<Index>(entries.size()), d);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].descriptor.global.size() != d)
                throw ValidationError("global descriptor dims differ across entries");
            index.globals_.row(static_cast<Index>(i)) = entries[i].descriptor.global.transpose();
        }
    }
    index.entries_ = std::move(entries);
    return index;
}

std::vector<Candidate> global_topk(const DescriptorIndex& index, const VecXf& query_global,
                                   int k) {
    if (k < 1) throw ValidationError("top-K needs K >= 1");
    const Index e = index.size();
    std::vector<Candidate> all(static_cast<std::size_t>(e));
    const MatXf& g = index.globals();
    for (Index i = 0; i < e; ++i) {
        double acc = 0;
        for (Index j = 0; j < query_global.size(); ++j) {
            const double diff = static_cast<double>(g(i, j)) - static_cast<double>(query_global[j]);
            acc += diff * diff;
        }
        all[static_cast<std::size_t>(i)] = {i, std::sqrt(acc)};
    }
    // stable sort keeps insertion order on exact ties
    std::stable_sort(all.begin(), all.end(),
                     [](const Candidate& a, const Candidate& b) { return a.distance < b.distance; });
    if (static_cast<Index>(k) < e) all.resize(static_cast<std::size_t>(k));
    return all;
}

std::vector<RankedCandidate> rerank(const ImageDescriptor& query, const DescriptorIndex& index,
                                    const std::vector<Candidate>& candidates,
                                    const SpatialScoreConfig& cfg) {
    std::vector<RankedCandidate> out(candidates.size());
    parallel_for(static_cast<std::int64_t>(candidates.size()), 1,
                 [&](std::int64_t c0, std::int64_t c1) {
                     for (std::int64_t i = c0; i < c1; ++i) {
                         const Candidate& c = candidates[static_cast<std::size_t>(i)];
                         const auto& entry = index.entries()[static_cast<std::size_t>(c.entry)];
                         const VerificationResult v =
                             spatial_score(query, entry.descriptor, cfg);
                         out[static_cast<std::size_t>(i)] = {c.entry, c.distance, v.score};
                     }
                 });
    std::stable_sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.spatial_score != b.spatial_score) return a.spatial_score > b.spatial_score;
        return a.distance < b.distance;
    });
    return out;
}

namespace {

const PlaceTag& tag_for(const std::unordered_map<std::string, PlaceTag>& tags,
                        const std::string& id) {
    auto it = tags.find(id);
    if (it == tags.end()) throw ValidationError("no ground-truth record for id '" + id + "'");
    return it->second;
}

std::vector<Index> final_ranking_entries(const QueryOutcome& o) {
    std::vector<Index> ids;
    if (!o.reranked.empty()) {
        ids.reserve(o.reranked.size());
        for (const auto& r : o.reranked) ids.push_back(r.entry);
    } else {
        ids.reserve(o.global_ranking.size());
        for (const auto& c : o.global_ranking) ids.push_back(c.entry);
    }
    return ids;
}

} // namespace

RecallReport recall_at_n(const std::vector<QueryOutcome>& outcomes,
                         const std::unordered_map<std::string, PlaceTag>& query_tags,
                         const DescriptorIndex& index, double radius_m,
                         const std::vector<int>& n_list) {
    RecallReport report;
    report.n_list = n_list;
    report.radius_m = radius_m;
    report.query_count = static_cast<Index>(outcomes.size());
    report.values.assign(n_list.size(), 0.0);
    if (outcomes.empty()) return report;

    for (const auto& o : outcomes) {
        const PlaceTag& qt = tag_for(query_tags, o.query_id);
        const std::vector<Index> ranking = final_ranking_entries(o);
        // first rank whose reference lies within the radius
        std::size_t first_hit = ranking.size();
        for (std::size_t r = 0; r < ranking.size(); ++r) {
            const PlaceTag& rt = index.entries()[static_cast<std::size_t>(ranking[r])].tag;
            const double dx = rt.easting_m - qt.easting_m;
            const double dy = rt.northing_m - qt.northing_m;
            if (std::sqrt(dx * dx + dy * dy) <= radius_m) {
                first_hit = r;
                break;
            }
        }
        for (std::size_t i = 0; i < n_list.size(); ++i)
            if (first_hit < static_cast<std::size_t>(n_list[i])) report.values[i] += 1.0;
    }
    for (double& v : report.values) v /= static_cast<double>(outcomes.size());
    return report;
}

double rotation_angle_deg(const PoseRpy& a, const PoseRpy& b) {
    auto to_matrix = [](const PoseRpy& p) {
        const double d2r = 3.14159265358979323846 / 180.0;
        return (Eigen::AngleAxisd(p.yaw * d2r, Eigen::Vector3d::UnitZ()) *
                Eigen::AngleAxisd(p.pitch * d2r, Eigen::Vector3d::UnitY()) *
                Eigen::AngleAxisd(p.roll * d2r, Eigen::Vector3d::UnitX()))
            .toRotationMatrix();
    };
    const Eigen::Matrix3d rel = to_matrix(a).transpose() * to_matrix(b);
    const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * 180.0 / 3.14159265358979323846;
}

std::vector<double> pose_recall(const std::vector<QueryOutcome>& outcomes,
                                const std::unordered_map<std::string, PlaceTag>& query_tags,
                                const DescriptorIndex& index,
                                const std::vector<PoseTolerance>& tolerances) {
    std::vector<double> fractions(tolerances.size(), 0.0);
    if (outcomes.empty()) return fractions;

    for (const auto& o : outcomes) {
        const PlaceTag& qt = tag_for(query_tags, o.query_id);
        if (!qt.pose) throw ValidationError("query '" + o.query_id + "' has no pose");
        const std::vector<Index> ranking = final_ranking_entries(o);
        if (ranking.empty()) continue;
        const PlaceTag& rt = index.entries()[static_cast<std::size_t>(ranking[0])].tag;
        if (!rt.pose) throw ValidationError("reference '" + rt.id + "' has no pose");

        const double dt = std::sqrt(std::pow(qt.pose->x - rt.pose->x, 2) +
                                    std::pow(qt.pose->y - rt.pose->y, 2) +
                                    std::pow(qt.pose->z - rt.pose->z, 2));
        const double da = rotation_angle_deg(*qt.pose, *rt.pose);
        for (std::size_t i = 0; i < tolerances.size(); ++i)
            if (dt <= tolerances[i].translation_m && da <= tolerances[i].rotation_deg)
                fractions[i] += 1.0;
    }
    for (double& v : fractions) v /= static_cast<double>(outcomes.size());
    return fractions;
}

std::size_t descriptor_header_bytes(const ImageDescriptor& d) {
    // id length + id bytes + grid rows + grid cols + key-patch count
    return 4 + d.id.size() + 4 + 4 + 4;
}

std::size_t descriptor_payload_bytes(const ImageDescriptor& d) {
    const std::size_t m = static_cast<std::size_t>(d.key_descs.rows());
    const std::size_t dim = static_cast<std::size_t>(d.global.size());
    const std::size_t desc_dim = static_cast<std::size_t>(d.key_descs.cols());
    return descriptor_header_bytes(d) + dim * 4 + m * 2 * 4 + m * desc_dim * 4;
}

MemoryReport memory_report(const DescriptorIndex& index) {
    MemoryReport report;
    report.container_bytes = kStoreHeaderBytes;
    report.total_bytes = report.container_bytes;
    for (const auto& e : index.entries()) {
        const ImageDescriptor& d = e.descriptor;
        MemoryEntry m;
        m.id = d.id;
        m.header_bytes = descriptor_header_bytes(d);
        m.global_bytes = static_cast<std::size_t>(d.global.size()) * 4;
        m.coord_bytes = static_cast<std::size_t>(d.key_coords.rows()) * 2 * 4;
        m.patch_bytes = static_cast<std::size_t>(d.key_descs.rows()) *
                        static_cast<std::size_t>(d.key_descs.cols()) * 4;
        report.total_bytes += m.total();
        report.per_image.push_back(std::move(m));
    }
    return report;
}

} // namespace tvpr
