#include "checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sas {

namespace {

constexpr const char* kMagic = "sas-checkpoint";
constexpr const char* kVersion = "v1";

void put_f32_le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    out.push_back(static_cast<char>(bits & 0xFF));
    out.push_back(static_cast<char>((bits >> 8) & 0xFF));
    out.push_back(static_cast<char>((bits >> 16) & 0xFF));
    out.push_back(static_cast<char>((bits >> 24) & 0xFF));
}

float get_f32_le(const unsigned char* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                         (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ostringstream manifest;
    manifest << kMagic << ' ' << kVersion << '\n';
    for (const auto& [k, v] : ckpt.meta) manifest << "meta " << k << ' ' << v << '\n';

    std::string blob;
    std::size_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        manifest << "tensor " << name << ' ' << t.rank();
        for (std::size_t i = 0; i < t.rank(); ++i) manifest << ' ' << t.dim(i);
        manifest << ' ' << offset << ' ' << t.numel() << '\n';
        for (std::size_t i = 0; i < t.numel(); ++i) put_f32_le(blob, t.at(i));
        offset += t.numel() * 4;
    }
    manifest << "blob " << blob.size() << '\n';

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    const std::string header = manifest.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint file not found: " + path);
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        std::size_t nl = contents.find('\n', pos);
        if (nl == std::string::npos) throw IoError("checkpoint manifest truncated: " + path);
        std::string line = contents.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    {
        std::istringstream first(next_line());
        std::string magic, version;
        first >> magic >> version;
        if (magic != kMagic) throw IoError("not a checkpoint file: " + path);
        if (version != kVersion)
            throw IoError("unsupported checkpoint version '" + version + "' in " + path +
                          " (expected " + kVersion + ")");
    }

    Checkpoint ckpt;
    struct Pending {
        std::string name;
        Shape shape;
        std::size_t offset = 0;
        std::size_t count = 0;
    };
    std::vector<Pending> pending;
    std::size_t blob_bytes = 0;
    for (;;) {
        std::istringstream line(next_line());
        std::string tag;
        line >> tag;
        if (tag == "meta") {
            std::string key;
            line >> key;
            std::string value;
            std::getline(line, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            ckpt.add_meta(key, value);
        } else if (tag == "tensor") {
            Pending p;
            std::size_t rank = 0;
            line >> p.name >> rank;
            p.shape.resize(rank);
            for (auto& e : p.shape) line >> e;
            line >> p.offset >> p.count;
            if (!line) throw IoError("malformed tensor line in checkpoint: " + path);
            if (shape_numel(p.shape) != p.count)
                throw IoError("tensor '" + p.name + "' count does not match shape in " + path);
            pending.push_back(std::move(p));
        } else if (tag == "blob") {
            line >> blob_bytes;
            if (!line) throw IoError("malformed blob line in checkpoint: " + path);
            break;
        } else {
            throw IoError("unknown manifest line '" + tag + "' in checkpoint: " + path);
        }
    }

    if (contents.size() - pos != blob_bytes)
        throw IoError("checkpoint blob length mismatch: manifest declares " +
                      std::to_string(blob_bytes) + " bytes, file holds " +
                      std::to_string(contents.size() - pos) + ": " + path);

    const unsigned char* blob = reinterpret_cast<const unsigned char*>(contents.data()) + pos;
    for (auto& p : pending) {
        if (p.offset + p.count * 4 > blob_bytes)
            throw IoError("tensor '" + p.name + "' extends past blob end: " + path);
        std::vector<float> data(p.count);
        for (std::size_t i = 0; i < p.count; ++i) data[i] = get_f32_le(blob + p.offset + i * 4);
        ckpt.add(p.name, TensorF::from(p.shape, std::move(data)));
    }
    return ckpt;
}

}  // namespace sas
