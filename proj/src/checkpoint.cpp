#include "lprune/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint and dataset files are written for little-endian hosts");

namespace lprune {

namespace {

constexpr char kMagic[4] = {'L', 'P', 'C', 'K'};
constexpr uint32_t kVersion = 1;

enum LayerTag : uint8_t {
    kDense = 1,
    kConv1D = 2,
    kBatchNorm1D = 3,
    kReLU = 4,
    kGlobalAvgPool1D = 5,
    kFlatten = 6,
};

struct Writer {
    std::ofstream out;
    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw std::runtime_error("cannot open for writing: " + path);
    }
    void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void i32(int32_t v) { bytes(&v, 4); }
    void f32(float v) { bytes(&v, 4); }
};

struct Reader {
    std::ifstream in;
    std::string path;
    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw std::runtime_error("cannot open: " + p);
    }
    void bytes(void* p, size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n))
            throw std::runtime_error("truncated file: " + path);
    }
    uint8_t u8() { uint8_t v; bytes(&v, 1); return v; }
    uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
    int32_t i32() { int32_t v; bytes(&v, 4); return v; }
    float f32() { float v; bytes(&v, 4); return v; }
};

std::vector<uint8_t> encode_layer(const PrimitiveLayer& layer) {
    std::vector<uint8_t> buf;
    auto put_u8 = [&buf](uint8_t v) { buf.push_back(v); };
    auto put_i32 = [&buf](int32_t v) {
        uint8_t b[4];
        std::memcpy(b, &v, 4);
        buf.insert(buf.end(), b, b + 4);
    };
    auto put_f32 = [&buf](float v) {
        uint8_t b[4];
        std::memcpy(b, &v, 4);
        buf.insert(buf.end(), b, b + 4);
    };
    if (const auto* d = std::get_if<Dense>(&layer)) {
        put_u8(kDense);
        put_i32(d->in_dim);
        put_i32(d->out_dim);
        put_u8(d->has_bias ? 1 : 0);
    } else if (const auto* c = std::get_if<Conv1D>(&layer)) {
        put_u8(kConv1D);
        put_i32(c->in_ch);
        put_i32(c->out_ch);
        put_i32(c->kernel);
        put_i32(c->stride);
        put_i32(c->padding);
        put_u8(c->has_bias ? 1 : 0);
    } else if (const auto* bn = std::get_if<BatchNorm1D>(&layer)) {
        put_u8(kBatchNorm1D);
        put_i32(bn->channels);
        put_f32(bn->eps);
        put_f32(bn->momentum);
    } else if (std::holds_alternative<ReLU>(layer)) {
        put_u8(kReLU);
    } else if (std::holds_alternative<GlobalAvgPool1D>(layer)) {
        put_u8(kGlobalAvgPool1D);
    } else {
        put_u8(kFlatten);
    }
    return buf;
}

void write_layer(Writer& w, const PrimitiveLayer& layer) {
    const std::vector<uint8_t> buf = encode_layer(layer);
    w.u32(static_cast<uint32_t>(buf.size()));
    w.bytes(buf.data(), buf.size());
}

PrimitiveLayer read_layer(Reader& r) {
    const uint32_t len = r.u32();
    std::vector<uint8_t> buf(len);
    r.bytes(buf.data(), len);
    size_t pos = 0;
    auto get_u8 = [&]() -> uint8_t {
        if (pos + 1 > buf.size()) throw std::runtime_error("corrupt layer record: " + r.path);
        return buf[pos++];
    };
    auto get_i32 = [&]() -> int32_t {
        if (pos + 4 > buf.size()) throw std::runtime_error("corrupt layer record: " + r.path);
        int32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    };
    auto get_f32 = [&]() -> float {
        if (pos + 4 > buf.size()) throw std::runtime_error("corrupt layer record: " + r.path);
        float v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    };
    const uint8_t tag = get_u8();
    switch (tag) {
        case kDense: {
            const int in = get_i32(), out = get_i32();
            const bool bias = get_u8() != 0;
            return make_dense(in, out, bias);
        }
        case kConv1D: {
            const int ic = get_i32(), oc = get_i32(), k = get_i32(), s = get_i32(), p = get_i32();
            const bool bias = get_u8() != 0;
            return make_conv1d(ic, oc, k, s, p, bias);
        }
        case kBatchNorm1D: {
            const int ch = get_i32();
            const float eps = get_f32(), mom = get_f32();
            return make_batchnorm(ch, eps, mom);
        }
        case kReLU:
            return ReLU{};
        case kGlobalAvgPool1D:
            return GlobalAvgPool1D{};
        case kFlatten:
            return Flatten{};
        default:
            throw std::runtime_error("unknown layer tag " + std::to_string(tag) + " in " + r.path);
    }
}

void write_tensors(Writer& w, const PrimitiveLayer& layer) {
    for (const Tensor* t : state_tensors(layer))
        w.bytes(t->data.data(), t->data.size() * sizeof(float));
}

void read_tensors(Reader& r, PrimitiveLayer& layer) {
    for (Tensor* t : state_tensors(layer))
        r.bytes(t->data.data(), t->data.size() * sizeof(float));
}

}  // namespace

void save_checkpoint(const ModelGraph& model, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.i32(model.in_channels);
    w.i32(model.num_classes);
    w.u32(static_cast<uint32_t>(model.units.size()));
    for (const Unit& u : model.units) {
        w.i32(u.id);
        w.u32(static_cast<uint32_t>(u.body.size()));
        for (const PrimitiveLayer& layer : u.body) write_layer(w, layer);
        w.u8(static_cast<uint8_t>(u.skip));
        if (u.skip == SkipKind::Projection) write_layer(w, *u.projection);
    }
    w.u32(static_cast<uint32_t>(model.head.size()));
    for (const PrimitiveLayer& layer : model.head) write_layer(w, layer);
    for (const Unit& u : model.units) {
        for (const PrimitiveLayer& layer : u.body) write_tensors(w, layer);
        if (u.projection) write_tensors(w, *u.projection);
    }
    for (const PrimitiveLayer& layer : model.head) write_tensors(w, layer);
    if (!w.out) throw std::runtime_error("write failed: " + path);
}

ModelGraph load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad magic in " + path + " (expected LPCK)");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    ModelGraph model;
    model.in_channels = r.i32();
    model.num_classes = r.i32();
    const uint32_t n_units = r.u32();
    model.units.resize(n_units);
    for (uint32_t i = 0; i < n_units; ++i) {
        Unit& u = model.units[i];
        u.id = r.i32();
        const uint32_t n_body = r.u32();
        for (uint32_t j = 0; j < n_body; ++j) u.body.push_back(read_layer(r));
        const uint8_t skip = r.u8();
        if (skip > 2) throw std::runtime_error("corrupt skip kind in " + path);
        u.skip = static_cast<SkipKind>(skip);
        if (u.skip == SkipKind::Projection) u.projection = read_layer(r);
    }
    const uint32_t n_head = r.u32();
    for (uint32_t j = 0; j < n_head; ++j) model.head.push_back(read_layer(r));
    for (Unit& u : model.units) {
        for (PrimitiveLayer& layer : u.body) read_tensors(r, layer);
        if (u.projection) read_tensors(r, *u.projection);
    }
    for (PrimitiveLayer& layer : model.head) read_tensors(r, layer);
    return model;
}

}  // namespace lprune
