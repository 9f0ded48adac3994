#include "tvpr/manifest.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace tvpr {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    const std::filesystem::path base = path.parent_path();

    std::vector<ManifestRecord> records;
    std::unordered_set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        ManifestRecord rec;
        try {
            rec.tag.id = j.at("id").get<std::string>();
            rec.tag.easting_m = j.at("easting_m").get<double>();
            rec.tag.northing_m = j.at("northing_m").get<double>();
            if (j.contains("image")) {
                std::filesystem::path p = j.at("image").get<std::string>();
                rec.image_path = p.is_absolute() ? p : base / p;
            }
            if (j.contains("heading_deg")) rec.tag.heading_deg = j.at("heading_deg").get<double>();
            if (j.contains("pose")) {
                const json& p = j.at("pose");
                rec.tag.pose = PoseRpy{p.at("x").get<double>(),     p.at("y").get<double>(),
                                       p.at("z").get<double>(),     p.at("yaw").get<double>(),
                                       p.at("pitch").get<double>(), p.at("roll").get<double>()};
            }
        } catch (const json::exception& e) {
            throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!std::isfinite(rec.tag.easting_m) || !std::isfinite(rec.tag.northing_m))
            throw ValidationError("manifest line " + std::to_string(line_no) +
                                  ": non-finite coordinates");
        if (!seen.insert(rec.tag.id).second)
            throw ValidationError("manifest: duplicate id '" + rec.tag.id + "'");
        records.push_back(std::move(rec));
    }
    return records;
}

void save_manifest(const std::vector<ManifestRecord>& records,
                   const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (const auto& rec : records) {
        ordered_json j;
        j["id"] = rec.tag.id;
        if (!rec.image_path.empty()) j["image"] = rec.image_path.string();
        j["easting_m"] = rec.tag.easting_m;
        j["northing_m"] = rec.tag.northing_m;
        if (rec.tag.heading_deg) j["heading_deg"] = *rec.tag.heading_deg;
        if (rec.tag.pose)
            j["pose"] = {{"x", rec.tag.pose->x},         {"y", rec.tag.pose->y},
                         {"z", rec.tag.pose->z},         {"yaw", rec.tag.pose->yaw},
                         {"pitch", rec.tag.pose->pitch}, {"roll", rec.tag.pose->roll}};
        out << j.dump() << "\n";
    }
}

std::unordered_map<std::string, PlaceTag> tag_map(const std::vector<ManifestRecord>& records) {
    std::unordered_map<std::string, PlaceTag> tags;
    for (const auto& r : records) tags[r.tag.id] = r.tag;
    return tags;
}

} // namespace tvpr
