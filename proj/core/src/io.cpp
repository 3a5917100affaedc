#include "voxflow/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "voxflow/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "serialization code assumes a little-endian host");

namespace voxflow {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
    os.write(reinterpret_cast<const char*>(&v), 2);
}

void put_f32(std::ostream& os, float v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

class Reader {
public:
    Reader(const std::filesystem::path& path) : path_(path.string()), is_(path, std::ios::binary) {
        if (!is_) throw io_error("cannot open " + path_ + " for reading");
    }

    std::uint32_t u32() {
        std::uint32_t v;
        read(&v, 4);
        return v;
    }
    std::uint16_t u16() {
        std::uint16_t v;
        read(&v, 2);
        return v;
    }
    float f32() {
        float v;
        read(&v, 4);
        return v;
    }
    void magic(const char (&m)[5]) {
        char buf[4];
        read(buf, 4);
        if (std::memcmp(buf, m, 4) != 0) {
            throw io_error(path_ + ": bad magic, expected " + std::string(m, 4));
        }
    }
    void expect_eof() {
        char c;
        is_.read(&c, 1);
        if (!is_.eof()) throw io_error(path_ + ": trailing bytes after payload");
    }
    const std::string& path() const { return path_; }

private:
    void read(void* dst, std::size_t n) {
        is_.read(static_cast<char*>(dst), std::streamsize(n));
        if (std::size_t(is_.gcount()) != n) throw io_error(path_ + ": truncated file");
    }
    std::string path_;
    std::ifstream is_;
};

float to_f32_checked(double v, const std::string& path) {
    if (!std::isfinite(v)) throw io_error(path + ": refusing to write non-finite value");
    float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw io_error(path + ": value overflows 32-bit float");
    return f;
}

double from_f32_checked(float v, const std::string& path) {
    if (!std::isfinite(v)) throw io_error(path + ": file contains a non-finite value");
    return double(v);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    return os;
}

}  // namespace

void write_vxg(const std::filesystem::path& path, const DenseLatentGrid& grid) {
    grid.validate();
    std::ofstream os = open_out(path);
    os.write("VXG1", 4);
    put_u32(os, std::uint32_t(grid.dims.h));
    put_u32(os, std::uint32_t(grid.dims.w));
    put_u32(os, std::uint32_t(grid.dims.d));
    put_u32(os, std::uint32_t(grid.channels));
    const std::string p = path.string();
    for (double v : grid.values) put_f32(os, to_f32_checked(v, p));
    if (!os) throw io_error("write failed for " + p);
}

DenseLatentGrid read_vxg(const std::filesystem::path& path) {
    Reader r(path);
    r.magic("VXG1");
    std::uint32_t h = r.u32(), w = r.u32(), d = r.u32(), c = r.u32();
    constexpr std::uint32_t kMaxSide = 4096, kMaxChannels = 4096;
    if (h == 0 || w == 0 || d == 0 || c == 0 || h > kMaxSide || w > kMaxSide || d > kMaxSide ||
        c > kMaxChannels) {
        throw io_error(r.path() + ": implausible header dims");
    }
    DenseLatentGrid g;
    g.dims = Dims3{int(h), int(w), int(d)};
    g.channels = int(c);
    g.values.resize(g.dims.total() * std::size_t(c));
    for (double& v : g.values) v = from_f32_checked(r.f32(), r.path());
    r.expect_eof();
    return g;
}

void write_vxs(const std::filesystem::path& path, const SparseLatentSet& sparse) {
    sparse.validate();
    if (sparse.resolution > 65535) throw io_error("sparse resolution exceeds u16 coordinate range");
    std::ofstream os = open_out(path);
    os.write("VXS1", 4);
    put_u32(os, std::uint32_t(sparse.resolution));
    put_u32(os, std::uint32_t(sparse.channels));
    put_u32(os, std::uint32_t(sparse.coords.size()));
    const std::string p = path.string();
    for (std::size_t i = 0; i < sparse.coords.size(); ++i) {
        const Coord3& cd = sparse.coords[i];
        put_u16(os, std::uint16_t(cd[0]));
        put_u16(os, std::uint16_t(cd[1]));
        put_u16(os, std::uint16_t(cd[2]));
        put_u16(os, 0);
        for (double v : sparse.row(i)) put_f32(os, to_f32_checked(v, p));
    }
    if (!os) throw io_error("write failed for " + p);
}

SparseLatentSet read_vxs(const std::filesystem::path& path) {
    Reader r(path);
    r.magic("VXS1");
    std::uint32_t n = r.u32(), c = r.u32(), count = r.u32();
    if (n == 0 || n > 65535 || c > 4096) throw io_error(r.path() + ": implausible header");
    SparseLatentSet s;
    s.resolution = int(n);
    s.channels = int(c);
    s.coords.resize(count);
    s.feats.resize(std::size_t(count) * c);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t x = r.u16(), y = r.u16(), z = r.u16(), pad = r.u16();
        if (pad != 0) throw io_error(r.path() + ": nonzero pad in coordinate record");
        s.coords[i] = Coord3{int(x), int(y), int(z)};
        for (std::uint32_t ch = 0; ch < c; ++ch) {
            s.feats[std::size_t(i) * c + ch] = from_f32_checked(r.f32(), r.path());
        }
    }
    r.expect_eof();
    try {
        s.validate();  // bounds + canonical order + finiteness
    } catch (const Error& e) {
        throw io_error(r.path() + ": " + e.what());
    }
    return s;
}

void write_mask_vxg(const std::filesystem::path& path, const BinaryMask3D& mask) {
    mask.validate();
    DenseLatentGrid g = DenseLatentGrid::zeros(mask.dims, 1);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) g.values[i] = mask.bits[i] ? 1.0 : 0.0;
    write_vxg(path, g);
}

BinaryMask3D read_mask_vxg(const std::filesystem::path& path) {
    DenseLatentGrid g = read_vxg(path);
    if (g.channels != 1) throw io_error(path.string() + ": mask grids must have exactly 1 channel");
    BinaryMask3D m = BinaryMask3D::zeros(g.dims);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        if (g.values[i] == 1.0) {
            m.bits[i] = 1;
        } else if (g.values[i] != 0.0) {
            throw io_error(path.string() + ": mask value outside {0,1}");
        }
    }
    return m;
}

std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string() + " for checksum");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    return checksum_string(h);
}

std::string checksum_string(std::uint64_t hash) {
    char out[32];
    std::snprintf(out, sizeof(out), "fnv1a64:%016llx", static_cast<unsigned long long>(hash));
    return out;
}

std::string double_to_hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double hex_to_double(const std::string& s) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw io_error("malformed hexfloat: " + s);
    return v;
}

}  // namespace voxflow
