#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voxflow/lattice.hpp"

namespace voxflow {

struct PointSet {
    std::vector<std::array<double, 3>> points;
};

// Voxel coordinates to unit-cube center points: (p + 0.5) / resolution.
PointSet pointset_from_coords(std::span<const Coord3> coords, int resolution);

// Symmetric chamfer distance with unsquared Euclidean point distances:
//   0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|).
// Brute force, fixed iteration order. Empty sets are an error.
double chamfer(const PointSet& a, const PointSet& b);

struct Projection2D {
    int rows = 0, cols = 0;
    std::vector<double> values;  // row-major

    double at(int r, int c) const { return values[std::size_t(r) * std::size_t(cols) + std::size_t(c)]; }
    double& at(int r, int c) { return values[std::size_t(r) * std::size_t(cols) + std::size_t(c)]; }
};

// Orthographic projection along an axis: each pixel is the mean feature
// magnitude (L2 over channels) across occupied voxels of its column, 0 where
// the column has none. A voxel is occupied when any channel is nonzero.
// Axis x gives a (y, z) image, y gives (x, z), z gives (x, y).
Projection2D project_ortho(const DenseLatentGrid& grid, Axis axis);

// Pixel mask (1 = preserved) for projected comparisons: a pixel is preserved
// iff its column contains no set voxel of the 3D mask.
std::vector<std::uint8_t> preserved_pixel_mask(const BinaryMask3D& mask, Axis axis);

// PSNR over masked pixels for unit-range images: 10 log10(1 / MSE), capped
// at 99 dB when the masked MSE is exactly zero. Empty masks are an error.
double masked_psnr(const Projection2D& a, const Projection2D& b,
                   std::span<const std::uint8_t> mask);

// Mean local SSIM (7x7 uniform window, C1 = 0.01^2, C2 = 0.03^2, unit range)
// over windows whose center pixel is masked. Windows are clipped at borders.
double masked_ssim(const Projection2D& a, const Projection2D& b,
                   std::span<const std::uint8_t> mask);

}  // namespace voxflow
