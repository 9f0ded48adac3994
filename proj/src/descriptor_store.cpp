#include "tvpr/descriptor_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>

// All container formats are little-endian on disk; payloads are written with
// bulk copies, which is only correct on a little-endian host.
static_assert(std::endian::native == std::endian::little,
              "descriptor store serialization assumes a little-endian host");

namespace tvpr {

namespace {

constexpr char kMagic[4] = {'T', 'V', 'P', 'D'};

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ofstream& out, const float* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}

void put_i32(std::ofstream& out, const std::int32_t* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}

struct StoreReader {
    std::string path;
    std::vector<unsigned char> buf;
    std::size_t pos = 0;

    explicit StoreReader(const std::filesystem::path& p) : path(p.string()) {
        std::ifstream in(p, std::ios::binary | std::ios::ate);
        if (!in) throw IoError("cannot open '" + path + "' for reading");
        buf.resize(static_cast<std::size_t>(in.tellg()));
        in.seekg(0);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    void bytes(void* p, std::size_t n) {
        if (pos + n > buf.size())
            throw FormatError("'" + path + "': unexpected end of file at offset " +
                              std::to_string(buf.size()));
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
};

} // namespace

void save_store(const std::vector<ImageDescriptor>& images, const std::filesystem::path& path) {
    std::uint32_t dim = 0;
    for (const auto& img : images) {
        if (dim == 0) dim = static_cast<std::uint32_t>(img.global.size());
        if (static_cast<std::uint32_t>(img.global.size()) != dim)
            throw ValidationError("descriptor dims differ across store entries");
        if (img.key_descs.rows() > 0 && img.key_descs.cols() != static_cast<Index>(dim))
            throw ValidationError("key-patch descriptor dim differs from global dim");
        if (img.key_coords.rows() != img.key_descs.rows())
            throw ValidationError("key coordinate and descriptor counts differ for '" + img.id +
                                  "'");
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(kMagic, 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(images.size()));
    put_u32(out, dim);
    for (const auto& img : images) {
        put_u32(out, static_cast<std::uint32_t>(img.id.size()));
        out.write(img.id.data(), static_cast<std::streamsize>(img.id.size()));
        put_u32(out, static_cast<std::uint32_t>(img.grid.rows));
        put_u32(out, static_cast<std::uint32_t>(img.grid.cols));
        put_u32(out, static_cast<std::uint32_t>(img.key_descs.rows()));
        put_f32(out, img.global.data(), static_cast<std::size_t>(img.global.size()));
        put_i32(out, img.key_coords.data(), static_cast<std::size_t>(img.key_coords.size()));
        put_f32(out, img.key_descs.data(), static_cast<std::size_t>(img.key_descs.size()));
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<ImageDescriptor> load_store(const std::filesystem::path& path) {
    StoreReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("'" + r.path + "': bad magic at offset 0 (expected \"TVPD\")");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw FormatError("'" + r.path + "': unsupported store version " +
                          std::to_string(version));
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();

    std::vector<ImageDescriptor> images;
    images.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        ImageDescriptor d;
        const std::uint32_t id_len = r.u32();
        d.id.resize(id_len);
        r.bytes(d.id.data(), id_len);
        d.grid.rows = static_cast<Index>(r.u32());
        d.grid.cols = static_cast<Index>(r.u32());
        const std::uint32_t m = r.u32();
        d.global.resize(static_cast<Index>(dim));
        r.bytes(d.global.data(), dim * 4);
        d.key_coords.resize(static_cast<Index>(m), 2);
        r.bytes(d.key_coords.data(), static_cast<std::size_t>(m) * 8);
        d.key_descs.resize(static_cast<Index>(m), static_cast<Index>(dim));
        r.bytes(d.key_descs.data(), static_cast<std::size_t>(m) * dim * 4);
        images.push_back(std::move(d));
    }
    if (r.pos != r.buf.size())
        throw FormatError("'" + r.path + "': trailing bytes at offset " + std::to_string(r.pos));
    return images;
}

} // namespace tvpr
