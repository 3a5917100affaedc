#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "voxflow/errors.hpp"

namespace voxflow {

// Integer voxel coordinate (x, y, z). Array comparison gives the canonical
// lexicographic order used everywhere coordinates are enumerated or stored.
using Coord3 = std::array<int, 3>;

enum class Axis { x, y, z };

inline int axis_index(Axis a) { return static_cast<int>(a); }

struct Dims3 {
    int h = 0, w = 0, d = 0;  // extents along x, y, z

    std::size_t total() const { return std::size_t(h) * std::size_t(w) * std::size_t(d); }
    bool contains(const Coord3& c) const {
        return c[0] >= 0 && c[0] < h && c[1] >= 0 && c[1] < w && c[2] >= 0 && c[2] < d;
    }
    bool cubic() const { return h == w && w == d; }
    bool operator==(const Dims3&) const = default;
};

// Dense voxel grid with C channels. Memory layout is planar: value (x,y,z,c)
// lives at x + h*(y + w*(z + d*c)) — x fastest, channel slowest. The disk
// format (.vxg) stores exactly this order.
struct DenseLatentGrid {
    Dims3 dims;
    int channels = 0;
    std::vector<double> values;

    static DenseLatentGrid zeros(Dims3 dims, int channels);

    std::size_t index(int x, int y, int z, int c) const {
        return std::size_t(x) +
               std::size_t(dims.h) * (std::size_t(y) +
               std::size_t(dims.w) * (std::size_t(z) + std::size_t(dims.d) * std::size_t(c)));
    }
    double at(int x, int y, int z, int c) const { return values[index(x, y, z, c)]; }
    double& at(int x, int y, int z, int c) { return values[index(x, y, z, c)]; }

    // Throws numeric_error on size mismatch or non-finite values.
    void validate() const;
};

// Binary occupancy / edit mask over a voxel grid.
struct BinaryMask3D {
    Dims3 dims;
    std::vector<std::uint8_t> bits;  // 0 or 1, same x-fastest layout as grids

    static BinaryMask3D zeros(Dims3 dims);

    std::size_t index(int x, int y, int z) const {
        return std::size_t(x) + std::size_t(dims.h) * (std::size_t(y) + std::size_t(dims.w) * std::size_t(z));
    }
    bool test(int x, int y, int z) const { return bits[index(x, y, z)] != 0; }
    void set(int x, int y, int z, bool v = true) { bits[index(x, y, z)] = v ? 1 : 0; }
    std::size_t count() const;
    bool operator==(const BinaryMask3D&) const = default;

    void validate() const;

    // Set coordinates in canonical order.
    std::vector<Coord3> set_coords() const;
};

// Real-valued mask with weights in [0, 1].
struct SoftMask3D {
    Dims3 dims;
    std::vector<double> weights;

    std::size_t index(int x, int y, int z) const {
        return std::size_t(x) + std::size_t(dims.h) * (std::size_t(y) + std::size_t(dims.w) * std::size_t(z));
    }
    double at(int x, int y, int z) const { return weights[index(x, y, z)]; }

    void validate() const;
};

// Sorted, duplicate-free set of voxel coordinates.
struct CoordinateSet {
    std::vector<Coord3> coords;

    // Sorts and silently deduplicates.
    static CoordinateSet from_unsorted(std::vector<Coord3> cs);

    std::size_t size() const { return coords.size(); }
    bool empty() const { return coords.empty(); }
    bool contains(const Coord3& c) const;

    void validate() const;  // throws numeric_error if unsorted or duplicated
};

// Sparse latent set: features anchored at active voxel coordinates of an
// N^3 grid. Coordinates are kept in canonical order; feature row i belongs
// to coords[i] and holds `channels` contiguous values.
struct SparseLatentSet {
    int resolution = 0;  // N
    int channels = 0;    // C
    std::vector<Coord3> coords;
    std::vector<double> feats;  // coords.size() * channels

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(feats).subspan(i * std::size_t(channels), std::size_t(channels));
    }
    std::span<double> row(std::size_t i) {
        return std::span<double>(feats).subspan(i * std::size_t(channels), std::size_t(channels));
    }
    // Index of a coordinate's row, if present (binary search).
    std::optional<std::size_t> find_row(const Coord3& c) const;

    void validate() const;
};

// Extract the sparse latent set of a cubic grid: a voxel is active when the
// value in `occupancy_channel` strictly exceeds `threshold`; the remaining
// channels become the features. Canonical coordinate order.
SparseLatentSet sparse_from_dense(const DenseLatentGrid& grid, int occupancy_channel = 0,
                                  double threshold = 0.5);

// Inverse of sparse_from_dense up to the occupancy values: channel 0 is 1 at
// active coords and 0 elsewhere, features fill channels 1..C.
DenseLatentGrid densify(const SparseLatentSet& sparse);

// Chebyshev (L-inf) dilation by `radius`; radius 0 is the identity.
BinaryMask3D dilate_mask(const BinaryMask3D& mask, int radius);

// weight(v) = 1 if v is set, else exp(-d(v)^2 / (2 sigma^2)) with d the
// Euclidean distance to the nearest set voxel (in voxel units). Empty mask
// gives all-zero weights. Exact: squared distances are computed by an exact
// integer distance transform.
SoftMask3D gaussian_falloff(const BinaryMask3D& mask, double sigma);

// Soft edit mask used for blending: 1 on the original mask, Gaussian falloff
// (distance to the original mask) on the dilated ring, exactly 0 outside the
// dilated support. The hard zero outside the support is what makes
// preservation outside the dilated mask bitwise for every config.
SoftMask3D soft_edit_mask(const BinaryMask3D& mask, int radius, double sigma);

// Exact squared Euclidean distance to the nearest set voxel, per voxel.
// Unset-everywhere input yields a grid of `infinity` markers (< 0 means none).
std::vector<double> squared_distance_transform(const BinaryMask3D& mask);

// Active coordinates that do not fall in the edit mask (the preserved set).
// Coordinates outside the mask's dims are a numeric (dimension) error.
CoordinateSet keep_complement(std::span<const Coord3> active, const BinaryMask3D& edit_mask);

}  // namespace voxflow
