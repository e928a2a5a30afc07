#include "waveforge/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "waveforge/layers.hpp"

namespace waveforge {
namespace ckpt {

namespace {

constexpr char kMagic[4] = {'W', 'F', 'T', 'S'};
constexpr std::uint8_t kVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(b), 8);
}

bool read_u64(std::istream& is, std::uint64_t& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        return false;
    }
    v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | b[i];
    }
    return true;
}

void write_f32(std::ostream& os, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32_or_throw(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("checkpoint: truncated parameter data");
    }
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | b[i];
    }
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedParam>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
    }
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    for (const auto& p : params) {
        write_u64(os, p.name.size());
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u64(os, p.tensor.rank());
        for (const auto d : p.tensor.shape()) {
            write_u64(os, static_cast<std::uint64_t>(d));
        }
        for (const double v : p.tensor.data()) {
            write_f32(os, static_cast<float>(v));
        }
    }
    if (!os) {
        throw IoError("checkpoint: write failed for '" + path.string() + "'");
    }
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("checkpoint: cannot open '" + path.string() + "'");
    }
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("checkpoint: '" + path.string() + "' is not a WFTS file");
    }
    const int version = is.get();
    if (version != kVersion) {
        throw FormatError("checkpoint: unsupported WFTS version " + std::to_string(version));
    }
    std::vector<std::pair<std::string, Tensor>> out;
    while (true) {
        std::uint64_t name_len = 0;
        if (!read_u64(is, name_len)) {
            if (is.eof()) {
                break; // clean end of records
            }
            throw FormatError("checkpoint: truncated record header");
        }
        if (name_len == 0 || name_len > 4096) {
            throw FormatError("checkpoint: implausible parameter name length");
        }
        std::string name(name_len, '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len))) {
            throw FormatError("checkpoint: truncated parameter name");
        }
        std::uint64_t rank = 0;
        if (!read_u64(is, rank) || rank > 8) {
            throw FormatError("checkpoint: bad rank for parameter '" + name + "'");
        }
        Shape shape;
        std::int64_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            std::uint64_t d = 0;
            if (!read_u64(is, d) || d == 0) {
                throw FormatError("checkpoint: bad dimensions for parameter '" + name + "'");
            }
            shape.push_back(static_cast<std::int64_t>(d));
            count *= static_cast<std::int64_t>(d);
        }
        std::vector<double> data(static_cast<std::size_t>(count));
        for (auto& v : data) {
            v = static_cast<double>(read_f32_or_throw(is));
        }
        out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    if (out.empty()) {
        throw FormatError("checkpoint: '" + path.string() + "' contains no parameters");
    }
    return out;
}

void apply_checkpoint(const std::vector<std::pair<std::string, Tensor>>& loaded,
                      std::vector<NamedParam>& params) {
    std::map<std::string, NamedParam*> by_name;
    for (auto& p : params) {
        by_name[p.name] = &p;
    }
    std::size_t applied = 0;
    for (const auto& [name, tensor] : loaded) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError("checkpoint: parameter '" + name +
                              "' does not exist in the model (spec mismatch)");
        }
        NamedParam* target = it->second;
        if (target->tensor.shape() != tensor.shape()) {
            throw ShapeError("checkpoint: parameter '" + name + "' has shape " +
                             shape_str(tensor.shape()) + " but the model expects " +
                             shape_str(target->tensor.shape()));
        }
        auto dst = target->tensor.mutable_data();
        const auto src = tensor.data();
        std::copy(src.begin(), src.end(), dst.begin());
        ++applied;
    }
    if (applied != params.size()) {
        throw FormatError("checkpoint: file provides " + std::to_string(applied) + " of " +
                          std::to_string(params.size()) + " model parameters (spec mismatch)");
    }
}

} // namespace ckpt
} // namespace waveforge
