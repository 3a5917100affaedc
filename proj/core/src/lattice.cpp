#include "voxflow/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace voxflow {

namespace {

void check_dims(const Dims3& dims) {
    if (dims.h <= 0 || dims.w <= 0 || dims.d <= 0) {
        std::ostringstream os;
        os << "grid dims must be positive, got " << dims.h << "x" << dims.w << "x" << dims.d;
        throw numeric_error(os.str());
    }
}

std::string coord_str(const Coord3& c) {
    std::ostringstream os;
    os << "(" << c[0] << "," << c[1] << "," << c[2] << ")";
    return os.str();
}

}  // namespace

DenseLatentGrid DenseLatentGrid::zeros(Dims3 dims, int channels) {
    check_dims(dims);
    if (channels <= 0) throw numeric_error("grid channel count must be positive");
    DenseLatentGrid g;
    g.dims = dims;
    g.channels = channels;
    g.values.assign(dims.total() * std::size_t(channels), 0.0);
    return g;
}

void DenseLatentGrid::validate() const {
    check_dims(dims);
    if (channels <= 0) throw numeric_error("grid channel count must be positive");
    if (values.size() != dims.total() * std::size_t(channels)) {
        throw numeric_error("grid value count does not match dims*channels");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw numeric_error("grid contains a non-finite value");
    }
}

BinaryMask3D BinaryMask3D::zeros(Dims3 dims) {
    check_dims(dims);
    BinaryMask3D m;
    m.dims = dims;
    m.bits.assign(dims.total(), 0);
    return m;
}

std::size_t BinaryMask3D::count() const {
    std::size_t n = 0;
    for (auto b : bits) n += (b != 0);
    return n;
}

void BinaryMask3D::validate() const {
    check_dims(dims);
    if (bits.size() != dims.total()) throw numeric_error("mask bit count does not match dims");
    for (auto b : bits) {
        if (b > 1) throw numeric_error("binary mask holds a value outside {0,1}");
    }
}

std::vector<Coord3> BinaryMask3D::set_coords() const {
    std::vector<Coord3> out;
    for (int x = 0; x < dims.h; ++x)
        for (int y = 0; y < dims.w; ++y)
            for (int z = 0; z < dims.d; ++z)
                if (test(x, y, z)) out.push_back({x, y, z});
    return out;  // loop nest order is already canonical (x, y, z)
}

void SoftMask3D::validate() const {
    check_dims(dims);
    if (weights.size() != dims.total()) throw numeric_error("soft mask weight count does not match dims");
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
            throw numeric_error("soft mask weight outside [0,1]");
        }
    }
}

CoordinateSet CoordinateSet::from_unsorted(std::vector<Coord3> cs) {
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    CoordinateSet s;
    s.coords = std::move(cs);
    return s;
}

bool CoordinateSet::contains(const Coord3& c) const {
    return std::binary_search(coords.begin(), coords.end(), c);
}

void CoordinateSet::validate() const {
    for (std::size_t i = 1; i < coords.size(); ++i) {
        if (!(coords[i - 1] < coords[i])) {
            throw numeric_error("coordinate set is not strictly sorted: " + coord_str(coords[i]));
        }
    }
}

std::optional<std::size_t> SparseLatentSet::find_row(const Coord3& c) const {
    auto it = std::lower_bound(coords.begin(), coords.end(), c);
    if (it == coords.end() || *it != c) return std::nullopt;
    return std::size_t(it - coords.begin());
}

void SparseLatentSet::validate() const {
    if (resolution <= 0) throw numeric_error("sparse set resolution must be positive");
    if (channels <= 0) throw numeric_error("sparse set channel count must be positive");
    if (feats.size() != coords.size() * std::size_t(channels)) {
        throw numeric_error("sparse set feature count does not match coords*channels");
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const Coord3& c = coords[i];
        for (int a = 0; a < 3; ++a) {
            if (c[a] < 0 || c[a] >= resolution) {
                throw numeric_error("sparse coordinate out of range: " + coord_str(c));
            }
        }
        if (i > 0 && !(coords[i - 1] < c)) {
            throw numeric_error("sparse coordinates not in canonical order at " + coord_str(c));
        }
    }
    for (double v : feats) {
        if (!std::isfinite(v)) throw numeric_error("sparse set contains a non-finite feature");
    }
}

SparseLatentSet sparse_from_dense(const DenseLatentGrid& grid, int occupancy_channel, double threshold) {
    grid.validate();
    if (!grid.dims.cubic()) throw numeric_error("sparse_from_dense requires a cubic grid");
    if (occupancy_channel < 0 || occupancy_channel >= grid.channels) {
        throw numeric_error("occupancy channel out of range");
    }
    SparseLatentSet s;
    s.resolution = grid.dims.h;
    s.channels = grid.channels - 1;
    for (int x = 0; x < grid.dims.h; ++x)
        for (int y = 0; y < grid.dims.w; ++y)
            for (int z = 0; z < grid.dims.d; ++z) {
                if (grid.at(x, y, z, occupancy_channel) > threshold) {
                    s.coords.push_back({x, y, z});
                    for (int c = 0; c < grid.channels; ++c) {
                        if (c == occupancy_channel) continue;
                        s.feats.push_back(grid.at(x, y, z, c));
                    }
                }
            }
    if (s.channels == 0) s.feats.clear();
    return s;
}

DenseLatentGrid densify(const SparseLatentSet& sparse) {
    sparse.validate();
    Dims3 dims{sparse.resolution, sparse.resolution, sparse.resolution};
    DenseLatentGrid g = DenseLatentGrid::zeros(dims, sparse.channels + 1);
    for (std::size_t i = 0; i < sparse.coords.size(); ++i) {
        const Coord3& c = sparse.coords[i];
        g.at(c[0], c[1], c[2], 0) = 1.0;
        auto r = sparse.row(i);
        for (int ch = 0; ch < sparse.channels; ++ch) {
            g.at(c[0], c[1], c[2], ch + 1) = r[ch];
        }
    }
    return g;
}

BinaryMask3D dilate_mask(const BinaryMask3D& mask, int radius) {
    mask.validate();
    if (radius < 0) throw usage_error("dilation radius must be >= 0");
    if (radius == 0) return mask;
    BinaryMask3D out = BinaryMask3D::zeros(mask.dims);
    for (int x = 0; x < mask.dims.h; ++x)
        for (int y = 0; y < mask.dims.w; ++y)
            for (int z = 0; z < mask.dims.d; ++z) {
                if (!mask.test(x, y, z)) continue;
                int x0 = std::max(0, x - radius), x1 = std::min(mask.dims.h - 1, x + radius);
                int y0 = std::max(0, y - radius), y1 = std::min(mask.dims.w - 1, y + radius);
                int z0 = std::max(0, z - radius), z1 = std::min(mask.dims.d - 1, z + radius);
                for (int zx = x0; zx <= x1; ++zx)
                    for (int zy = y0; zy <= y1; ++zy)
                        for (int zz = z0; zz <= z1; ++zz) out.set(zx, zy, zz);
            }
    return out;
}

namespace {

constexpr double kDtInf = 1e30;

// Felzenszwalb-Huttenlocher 1D squared distance transform (lower envelope of
// parabolas). With integer-valued f this is exact in double arithmetic: any
// rounding in the intersection abscissa can only flip decisions at exact
// ties, where both parabolas give the same value.
void dt_1d(std::span<const double> f, std::span<double> out, std::vector<int>& v,
           std::vector<double>& z) {
    const int n = int(f.size());
    v.assign(std::size_t(n), 0);
    z.assign(std::size_t(n) + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -kDtInf;
    z[1] = kDtInf;
    for (int q = 1; q < n; ++q) {
        double s = 0;
        while (true) {
            int p = v[std::size_t(k)];
            s = ((f[std::size_t(q)] + double(q) * q) - (f[std::size_t(p)] + double(p) * p)) /
                (2.0 * q - 2.0 * p);
            if (s <= z[std::size_t(k)]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[std::size_t(k)] = q;
        z[std::size_t(k)] = s;
        z[std::size_t(k) + 1] = kDtInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[std::size_t(k) + 1] < double(q)) ++k;
        int p = v[std::size_t(k)];
        out[std::size_t(q)] = double(q - p) * double(q - p) + f[std::size_t(p)];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const BinaryMask3D& mask) {
    mask.validate();
    const Dims3 d = mask.dims;
    std::vector<double> dist(d.total());
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = mask.bits[i] ? 0.0 : kDtInf;

    auto idx = [&](int x, int y, int z) { return mask.index(x, y, z); };
    std::vector<int> v;
    std::vector<double> z, line, out;

    // x pass
    line.resize(std::size_t(d.h));
    out.resize(std::size_t(d.h));
    for (int zz = 0; zz < d.d; ++zz)
        for (int yy = 0; yy < d.w; ++yy) {
            for (int xx = 0; xx < d.h; ++xx) line[std::size_t(xx)] = dist[idx(xx, yy, zz)];
            dt_1d(line, out, v, z);
            for (int xx = 0; xx < d.h; ++xx) dist[idx(xx, yy, zz)] = out[std::size_t(xx)];
        }
    // y pass
    line.resize(std::size_t(d.w));
    out.resize(std::size_t(d.w));
    for (int zz = 0; zz < d.d; ++zz)
        for (int xx = 0; xx < d.h; ++xx) {
            for (int yy = 0; yy < d.w; ++yy) line[std::size_t(yy)] = dist[idx(xx, yy, zz)];
            dt_1d(line, out, v, z);
            for (int yy = 0; yy < d.w; ++yy) dist[idx(xx, yy, zz)] = out[std::size_t(yy)];
        }
    // z pass
    line.resize(std::size_t(d.d));
    out.resize(std::size_t(d.d));
    for (int yy = 0; yy < d.w; ++yy)
        for (int xx = 0; xx < d.h; ++xx) {
            for (int zz = 0; zz < d.d; ++zz) line[std::size_t(zz)] = dist[idx(xx, yy, zz)];
            dt_1d(line, out, v, z);
            for (int zz = 0; zz < d.d; ++zz) dist[idx(xx, yy, zz)] = out[std::size_t(zz)];
        }
    // Voxels the sentinel never drained from are unreachable (empty mask):
    // mark them with the documented negative marker.
    for (double& e : dist) {
        if (e >= kDtInf) e = -1.0;
    }
    return dist;
}

SoftMask3D gaussian_falloff(const BinaryMask3D& mask, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw usage_error("gaussian falloff sigma must be > 0");
    mask.validate();
    SoftMask3D soft;
    soft.dims = mask.dims;
    soft.weights.assign(mask.dims.total(), 0.0);
    if (mask.count() == 0) return soft;  // empty mask: all-zero weights
    std::vector<double> d2 = squared_distance_transform(mask);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < d2.size(); ++i) {
        soft.weights[i] = mask.bits[i] ? 1.0 : std::exp(-d2[i] * inv);
    }
    return soft;
}

SoftMask3D soft_edit_mask(const BinaryMask3D& mask, int radius, double sigma) {
    BinaryMask3D support = dilate_mask(mask, radius);
    SoftMask3D falloff = gaussian_falloff(mask, sigma);
    for (std::size_t i = 0; i < falloff.weights.size(); ++i) {
        if (!support.bits[i]) falloff.weights[i] = 0.0;
    }
    return falloff;
}

CoordinateSet keep_complement(std::span<const Coord3> active, const BinaryMask3D& edit_mask) {
    edit_mask.validate();
    std::vector<Coord3> kept;
    for (const Coord3& c : active) {
        if (!edit_mask.dims.contains(c)) {
            throw numeric_error("keep_complement: active coordinate " + coord_str(c) +
                                " outside mask dims");
        }
        if (!edit_mask.test(c[0], c[1], c[2])) kept.push_back(c);
    }
    return CoordinateSet::from_unsorted(std::move(kept));
}

}  // namespace voxflow
