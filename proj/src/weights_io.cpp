#include "tvpr/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "weights serialization assumes a little-endian host");

namespace tvpr {

namespace {

constexpr char kMagic[4] = {'T', 'V', 'P', 'R'};

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u32(std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void f32_array(const float* p, std::size_t n) {
        bytes(p, n * 4);
    }
    bool good() const { return static_cast<bool>(out_); }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path.string()) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw IoError("cannot open '" + path_ + "' for reading");
        buf_.resize(static_cast<std::size_t>(in.tellg()));
        in.seekg(0);
        in.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    }
    std::size_t offset() const { return pos_; }
    void bytes(void* p, std::size_t n) {
        if (pos_ + n > buf_.size())
            throw FormatError("'" + path_ + "': unexpected end of file at offset " +
                              std::to_string(buf_.size()) + " (needed " +
                              std::to_string(pos_ + n) + ")");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | (static_cast<std::uint64_t>(u32()) << 32);
    }
    std::string str(std::size_t n) {
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    bool at_end() const { return pos_ == buf_.size(); }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::vector<unsigned char> buf_;
    std::size_t pos_ = 0;
};

} // namespace

const NamedTensor& WeightsContainer::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw FormatError("missing tensor '" + name + "'");
}

bool WeightsContainer::contains(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

void save_container(const WeightsContainer& c, const std::filesystem::path& path) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(c.version);
    w.u32(static_cast<std::uint32_t>(c.metadata_json.size()));
    w.bytes(c.metadata_json.data(), c.metadata_json.size());
    w.u32(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& t : c.tensors) {
        w.u32(static_cast<std::uint32_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.u32(0); // dtype float32
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (Index e : t.shape) w.u64(static_cast<std::uint64_t>(e));
        w.f32_array(t.data.data(), t.data.size());
    }
    if (!w.good()) throw IoError("write failed for '" + path.string() + "'");
}

WeightsContainer load_container(const std::filesystem::path& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("'" + r.path() + "': bad magic at offset 0 (expected \"TVPR\")");
    WeightsContainer c;
    c.version = r.u32();
    if (c.version != 1)
        throw FormatError("'" + r.path() + "': unsupported container version " +
                          std::to_string(c.version));
    c.metadata_json = r.str(r.u32());
    const std::uint32_t count = r.u32();
    c.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str(r.u32());
        const std::uint32_t dtype = r.u32();
        if (dtype != 0)
            throw FormatError("'" + r.path() + "': tensor '" + t.name + "' has unknown dtype " +
                              std::to_string(dtype));
        const std::uint32_t rank = r.u32();
        if (rank < 1 || rank > 4)
            throw FormatError("'" + r.path() + "': tensor '" + t.name + "' has invalid rank " +
                              std::to_string(rank));
        std::size_t volume = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const std::uint64_t e = r.u64();
            if (e == 0) throw FormatError("'" + r.path() + "': zero extent in '" + t.name + "'");
            t.shape.push_back(static_cast<Index>(e));
            volume *= static_cast<std::size_t>(e);
        }
        t.data.resize(volume);
        r.bytes(t.data.data(), volume * 4);
        for (const auto& prev : c.tensors)
            if (prev.name == t.name)
                throw FormatError("'" + r.path() + "': duplicate tensor '" + t.name + "'");
        c.tensors.push_back(std::move(t));
    }
    if (!r.at_end())
        throw FormatError("'" + r.path() + "': trailing bytes after tensor table at offset " +
                          std::to_string(r.offset()));
    return c;
}

namespace {

NamedTensor from_matrix(std::string name, const MatXf& m) {
    NamedTensor t;
    t.name = std::move(name);
    t.shape = {m.rows(), m.cols()};
    t.data.assign(m.data(), m.data() + m.size());
    return t;
}

NamedTensor from_vector(std::string name, const VecXf& v) {
    NamedTensor t;
    t.name = std::move(name);
    t.shape = {v.size()};
    t.data.assign(v.data(), v.data() + v.size());
    return t;
}

NamedTensor from_tensor(std::string name, const Tensorf& x) {
    NamedTensor t;
    t.name = std::move(name);
    t.shape = x.shape();
    t.data.assign(x.data(), x.data() + x.size());
    return t;
}

MatXf to_matrix(const NamedTensor& t) {
    if (t.shape.size() != 2) throw FormatError("tensor '" + t.name + "' is not rank 2");
    return Eigen::Map<const MatXf>(t.data.data(), t.shape[0], t.shape[1]);
}

VecXf to_vector(const NamedTensor& t) {
    if (t.shape.size() != 1) throw FormatError("tensor '" + t.name + "' is not rank 1");
    return Eigen::Map<const VecXf>(t.data.data(), t.shape[0]);
}

Tensorf to_tensor(const NamedTensor& t) { return Tensorf(t.shape, t.data); }

const char* variant_key(AggVariant v) {
    switch (v) {
        case AggVariant::standard: return "standard";
        case AggVariant::plain: return "plain";
        case AggVariant::ml_satt: return "mlsatt";
        case AggVariant::sl_satt: return "slsatt";
    }
    return "?";
}

constexpr AggVariant kAllVariants[] = {AggVariant::standard, AggVariant::plain,
                                       AggVariant::ml_satt, AggVariant::sl_satt};

} // namespace

WeightsContainer pack_model(const ModelWeights& w) {
    const ModelConfig& c = w.config;
    WeightsContainer out;

    nlohmann::ordered_json meta;
    meta["dim"] = c.dim;
    meta["layers"] = c.layers;
    meta["heads"] = c.heads;
    meta["mlp_ratio"] = c.mlp_ratio;
    meta["channels"] = c.channels;
    meta["taps"] = c.taps;
    meta["tau"] = c.tau;
    meta["input_mean"] = c.input_mean;
    meta["input_std"] = c.input_std;
    meta["class_token"] = c.with_class_token;
    out.metadata_json = meta.dump();

    for (int i = 0; i < 4; ++i) {
        const auto& blk = w.backbone.blocks[static_cast<std::size_t>(i)];
        const std::string p = "backbone.conv" + std::to_string(i + 1);
        out.tensors.push_back(from_tensor(p + ".kernel", blk.kernel));
        out.tensors.push_back(from_vector(p + ".bn_mean", blk.bn_mean));
        out.tensors.push_back(from_vector(p + ".bn_var", blk.bn_var));
        out.tensors.push_back(from_vector(p + ".bn_gamma", blk.bn_gamma));
        out.tensors.push_back(from_vector(p + ".bn_beta", blk.bn_beta));
    }
    for (int i = 0; i < 4; ++i)
        out.tensors.push_back(from_matrix("embed.l" + std::to_string(i + 1) + ".proj",
                                          w.backbone.embed[static_cast<std::size_t>(i)]));

    for (std::size_t l = 0; l < w.encoder.layers.size(); ++l) {
        const auto& layer = w.encoder.layers[l];
        const std::string p = "encoder.l" + std::to_string(l);
        out.tensors.push_back(from_vector(p + ".ln1_gamma", layer.ln1_gamma));
        out.tensors.push_back(from_vector(p + ".ln1_beta", layer.ln1_beta));
        out.tensors.push_back(from_matrix(p + ".wq", layer.msa.wq));
        out.tensors.push_back(from_vector(p + ".bq", layer.msa.bq));
        out.tensors.push_back(from_matrix(p + ".wk", layer.msa.wk));
        out.tensors.push_back(from_vector(p + ".bk", layer.msa.bk));
        out.tensors.push_back(from_matrix(p + ".wv", layer.msa.wv));
        out.tensors.push_back(from_vector(p + ".bv", layer.msa.bv));
        out.tensors.push_back(from_matrix(p + ".wo", layer.msa.wo));
        out.tensors.push_back(from_vector(p + ".bo", layer.msa.bo));
        out.tensors.push_back(from_vector(p + ".ln2_gamma", layer.ln2_gamma));
        out.tensors.push_back(from_vector(p + ".ln2_beta", layer.ln2_beta));
        out.tensors.push_back(from_matrix(p + ".mlp_w1", layer.mlp_w1));
        out.tensors.push_back(from_vector(p + ".mlp_b1", layer.mlp_b1));
        out.tensors.push_back(from_matrix(p + ".mlp_w2", layer.mlp_w2));
        out.tensors.push_back(from_vector(p + ".mlp_b2", layer.mlp_b2));
    }
    if (w.encoder.class_token.size() > 0)
        out.tensors.push_back(from_vector("encoder.class_token", w.encoder.class_token));

    for (AggVariant v : kAllVariants) {
        auto it = w.heads.find(v);
        if (it == w.heads.end()) continue;
        const std::string p = std::string("head.") + variant_key(v);
        out.tensors.push_back(from_matrix(p + ".attn", it->second.attn));
        out.tensors.push_back(from_matrix(p + ".wg", it->second.wg));
    }
    return out;
}

ModelWeights unpack_model(const WeightsContainer& c) {
    ModelWeights w;
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(c.metadata_json);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid metadata JSON: ") + e.what());
    }
    try {
        w.config.dim = meta.at("dim").get<int>();
        w.config.layers = meta.at("layers").get<int>();
        w.config.heads = meta.at("heads").get<int>();
        w.config.mlp_ratio = meta.at("mlp_ratio").get<int>();
        w.config.channels = meta.at("channels").get<std::array<int, 4>>();
        w.config.taps = meta.at("taps").get<std::array<int, 3>>();
        w.config.tau = meta.at("tau").get<float>();
        w.config.input_mean = meta.at("input_mean").get<std::array<float, 3>>();
        w.config.input_std = meta.at("input_std").get<std::array<float, 3>>();
        w.config.with_class_token = meta.value("class_token", false);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metadata field missing or mistyped: ") + e.what());
    }

    for (int i = 0; i < 4; ++i) {
        auto& blk = w.backbone.blocks[static_cast<std::size_t>(i)];
        const std::string p = "backbone.conv" + std::to_string(i + 1);
        blk.kernel = to_tensor(c.find(p + ".kernel"));
        blk.bn_mean = to_vector(c.find(p + ".bn_mean"));
        blk.bn_var = to_vector(c.find(p + ".bn_var"));
        blk.bn_gamma = to_vector(c.find(p + ".bn_gamma"));
        blk.bn_beta = to_vector(c.find(p + ".bn_beta"));
        w.backbone.embed[static_cast<std::size_t>(i)] =
            to_matrix(c.find("embed.l" + std::to_string(i + 1) + ".proj"));
    }
    w.backbone.input_mean = Eigen::Map<const Eigen::Vector3f>(w.config.input_mean.data());
    w.backbone.input_std = Eigen::Map<const Eigen::Vector3f>(w.config.input_std.data());

    w.encoder.heads = w.config.heads;
    for (int l = 0; l < w.config.layers; ++l) {
        EncoderLayerWeights<float> layer;
        const std::string p = "encoder.l" + std::to_string(l);
        layer.ln1_gamma = to_vector(c.find(p + ".ln1_gamma"));
        layer.ln1_beta = to_vector(c.find(p + ".ln1_beta"));
        layer.msa.wq = to_matrix(c.find(p + ".wq"));
        layer.msa.bq = to_vector(c.find(p + ".bq"));
        layer.msa.wk = to_matrix(c.find(p + ".wk"));
        layer.msa.bk = to_vector(c.find(p + ".bk"));
        layer.msa.wv = to_matrix(c.find(p + ".wv"));
        layer.msa.bv = to_vector(c.find(p + ".bv"));
        layer.msa.wo = to_matrix(c.find(p + ".wo"));
        layer.msa.bo = to_vector(c.find(p + ".bo"));
        layer.ln2_gamma = to_vector(c.find(p + ".ln2_gamma"));
        layer.ln2_beta = to_vector(c.find(p + ".ln2_beta"));
        layer.mlp_w1 = to_matrix(c.find(p + ".mlp_w1"));
        layer.mlp_b1 = to_vector(c.find(p + ".mlp_b1"));
        layer.mlp_w2 = to_matrix(c.find(p + ".mlp_w2"));
        layer.mlp_b2 = to_vector(c.find(p + ".mlp_b2"));
        w.encoder.layers.push_back(std::move(layer));
    }
    if (c.contains("encoder.class_token"))
        w.encoder.class_token = to_vector(c.find("encoder.class_token"));

    for (AggVariant v : kAllVariants) {
        const std::string p = std::string("head.") + variant_key(v);
        if (!c.contains(p + ".attn")) {
            if (v == AggVariant::standard) throw FormatError("missing tensor '" + p + ".attn'");
            continue;
        }
        w.heads[v] = {to_matrix(c.find(p + ".attn")), to_matrix(c.find(p + ".wg"))};
    }

    validate_model(w);
    return w;
}

void save_model(const ModelWeights& w, const std::filesystem::path& path) {
    save_container(pack_model(w), path);
}

ModelWeights load_model(const std::filesystem::path& path) {
    return unpack_model(load_container(path));
}

} // namespace tvpr
