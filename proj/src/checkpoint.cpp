#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "estan/train.hpp"

namespace estan::train {

namespace {

constexpr char kMagic[] = "ESTANCKPT";  // 9 bytes on disk, no terminator
constexpr size_t kMagicLen = 9;
constexpr uint16_t kVersion = 1;
constexpr uint32_t kMaxNameLen = 4096;

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

/// Sequential little-endian reader over an in-memory file image.
struct Reader {
    const unsigned char* p;
    size_t left;
    const std::string& path;

    void need(size_t n, const std::string& what) {
        if (left < n)
            throw FormatError(path + ": truncated file reading " + what);
    }
    void raw(void* dst, size_t n, const std::string& what) {
        need(n, what);
        std::memcpy(dst, p, n);
        p += n;
        left -= n;
    }
    uint16_t u16(const std::string& what) {
        need(2, what);
        uint16_t v = static_cast<uint16_t>(p[0]) | static_cast<uint16_t>(p[1]) << 8;
        p += 2;
        left -= 2;
        return v;
    }
    uint32_t u32(const std::string& what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    float f32(const std::string& what) { return std::bit_cast<float>(u32(what)); }
};

}  // namespace

void save_checkpoint(const model::ModelParams<float>& params, const std::string& path) {
    std::string buf;
    buf.append(kMagic, kMagicLen);
    put_u16(buf, kVersion);
    put_u32(buf, static_cast<uint32_t>(params.order.size()));
    for (const std::string& name : params.order) {
        const nn::ConvKernel<float>& k = model::kernel(params, name);
        put_u32(buf, static_cast<uint32_t>(name.size()));
        buf.append(name);
        put_u32(buf, static_cast<uint32_t>(k.out_channels()));
        put_u32(buf, static_cast<uint32_t>(k.in_channels()));
        put_u32(buf, static_cast<uint32_t>(k.kh()));
        put_u32(buf, static_cast<uint32_t>(k.kw()));
        const float* w = k.weights.data();
        for (size_t i = 0; i < k.weights.size(); ++i) put_f32(buf, w[i]);
        for (float b : k.bias) put_f32(buf, b);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

model::ModelParams<float> load_checkpoint(const std::string& path,
                                          const arch::ArchSpec& spec) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> file(static_cast<size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(file.data()), size);
    if (!in) throw IoError("read failed: " + path);

    Reader r{file.data(), file.size(), path};
    char magic[kMagicLen];
    r.raw(magic, kMagicLen, "magic");
    if (std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw FormatError(path + ": bad magic");
    const uint16_t version = r.u16("version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    const uint32_t count = r.u32("entry count");

    model::ModelParams<float> params;
    params.spec = spec;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32("name length");
        if (name_len == 0 || name_len > kMaxNameLen)
            throw FormatError(path + ": implausible name length " +
                              std::to_string(name_len));
        std::string name(name_len, '\0');
        r.raw(name.data(), name_len, "layer name");
        uint32_t d[4];
        for (int j = 0; j < 4; ++j) d[j] = r.u32("dims of '" + name + "'");
        for (int j = 0; j < 4; ++j)
            if (d[j] == 0 || d[j] > (1u << 24))
                throw FormatError(path + ": implausible dims of '" + name + "'");
        nn::ConvKernel<float> k = nn::conv_kernel_zeros<float>(
            static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2]),
            static_cast<int>(d[3]));
        const size_t wcount = k.weights.size();
        r.need(4 * (wcount + k.bias.size()), "payload of '" + name + "'");
        for (size_t j = 0; j < wcount; ++j)
            k.weights.data()[j] = r.f32("weights of '" + name + "'");
        for (size_t j = 0; j < k.bias.size(); ++j)
            k.bias[j] = r.f32("bias of '" + name + "'");
        if (params.kernels.count(name))
            throw FormatError(path + ": duplicate layer '" + name + "'");
        params.order.push_back(name);
        params.kernels.emplace(std::move(name), std::move(k));
    }
    if (r.left != 0)
        throw FormatError(path + ": " + std::to_string(r.left) +
                          " trailing bytes after last entry");
    model::validate_against_spec(params);
    return params;
}

}  // namespace estan::train
