#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tvpr/model.hpp"

namespace tvpr {

// Binary weights container.
//
// Layout (all integers little-endian):
//   magic   "TVPR"                      4 bytes
//   version u32                         (currently 1)
//   meta    u32 length + UTF-8 JSON     (normalization constants, taps,
//                                        head count, MLP ratio, tau, dims)
//   count   u32 tensor records, each:
//     name  u32 length + UTF-8 bytes
//     dtype u32 (0 = float32)
//     rank  u32
//     ext   u64 per dimension
//     data  4 * prod(ext) bytes, row-major
//
// Round-trips are lossless: save(load(f)) reproduces f byte for byte.

struct NamedTensor {
    std::string name;
    std::vector<Index> shape;
    std::vector<float> data;
};

struct WeightsContainer {
    std::uint32_t version = 1;
    std::string metadata_json;
    std::vector<NamedTensor> tensors;

    const NamedTensor& find(const std::string& name) const;
    bool contains(const std::string& name) const;
};

void save_container(const WeightsContainer& c, const std::filesystem::path& path);
WeightsContainer load_container(const std::filesystem::path& path);

// Model <-> container packing. unpack_model validates the fixed architecture
// (channel schedule, layer count, dim) and throws FormatError when a required
// tensor is absent.
WeightsContainer pack_model(const ModelWeights& w);
ModelWeights unpack_model(const WeightsContainer& c);

void save_model(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_model(const std::filesystem::path& path);

} // namespace tvpr
