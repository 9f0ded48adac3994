#pragma once

#include <filesystem>
#include <unordered_map>
#include <vector>

#include "tvpr/retrieval.hpp"

namespace tvpr {

// Dataset manifests are JSON lines, one record per image:
//   {"id": "...", "image": "path.ppm", "easting_m": 12.5, "northing_m": -3.0,
//    "heading_deg": 90.0,                               // optional
//    "pose": {"x":..,"y":..,"z":..,"yaw":..,"pitch":..,"roll":..}}  // optional
// Relative image paths resolve against the manifest's directory.

struct ManifestRecord {
    PlaceTag tag;
    std::filesystem::path image_path;
};

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<ManifestRecord>& records,
                   const std::filesystem::path& path);

std::unordered_map<std::string, PlaceTag> tag_map(const std::vector<ManifestRecord>& records);

} // namespace tvpr
