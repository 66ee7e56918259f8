#include "kgje/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace kgje {

namespace {

constexpr char kMagic[4] = {'K', 'G', 'J', 'E'};

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    const std::string& path;
    size_t pos = 0;
    void need(size_t n) const {
        if (pos + n > buf.size()) throw FormatError("truncated checkpoint " + path);
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint8_t>(buf[pos]) | (static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + static_cast<size_t>(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, Checkpoint::kVersion);
    put_u32(out, static_cast<uint32_t>(c.params.size()));
    for (const auto& [name, tensor] : c.params) {
        if (name.size() > 0xffff) throw UsageError("parameter name too long: " + name);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.append(name);
        out.push_back(static_cast<char>(tensor.shape.size()));
        for (int64_t d : tensor.shape) put_u32(out, static_cast<uint32_t>(d));
        for (float v : tensor.data) put_f32(out, v);
    }
    std::string block;
    for (const auto& [k, v] : c.config) block += k + "=" + v + "\n";
    put_u32(out, static_cast<uint32_t>(block.size()));
    out += block;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot write checkpoint " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf, path};

    if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError("bad magic in " + path);
    const uint32_t version = r.u32();
    if (version != Checkpoint::kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + path);

    Checkpoint c;
    const uint32_t records = r.u32();
    for (uint32_t i = 0; i < records; ++i) {
        const std::string name = r.bytes(r.u16());
        const uint8_t rank = r.u8();
        Shape shape;
        for (uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<int64_t>(r.u32()));
        TensorT<float> t(shape);
        for (auto& v : t.data) v = r.f32();
        c.params.create(name, std::move(t));
    }
    const uint32_t block_len = r.u32();
    const std::string block = r.bytes(block_len);
    if (r.pos != buf.size()) throw FormatError("trailing bytes in checkpoint " + path);
    size_t start = 0;
    while (start < block.size()) {
        size_t end = block.find('\n', start);
        if (end == std::string::npos) end = block.size();
        const std::string line = block.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("bad config line in checkpoint: " + line);
        c.config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return c;
}

}  // namespace kgje
