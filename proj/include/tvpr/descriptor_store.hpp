#pragma once

#include <filesystem>
#include <vector>

#include "tvpr/retrieval.hpp"

namespace tvpr {

// Descriptor store container, magic "TVPD".
//
//   magic "TVPD", version u32, image count u32, descriptor dim u32,
//   then per image:
//     id    u32 length + UTF-8 bytes
//     grid  u32 rows, u32 cols
//     M     u32 key-patch count
//     global  D float32
//     coords  M x 2 int32 (x, y)
//     descs   M x D float32
//
// Per-image byte counts follow memory_report exactly; the file-level header
// is kStoreHeaderBytes.

void save_store(const std::vector<ImageDescriptor>& images, const std::filesystem::path& path);
std::vector<ImageDescriptor> load_store(const std::filesystem::path& path);

} // namespace tvpr
