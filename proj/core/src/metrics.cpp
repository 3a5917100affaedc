#include "voxflow/metrics.hpp"

#include <cmath>
#include <limits>

#include "voxflow/errors.hpp"

namespace voxflow {

namespace {

double point_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double directed_mean_nn(const PointSet& from, const PointSet& to) {
    double sum = 0.0;
    for (const auto& p : from.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to.points) {
            const double d = point_distance(p, q);
            if (d < best) best = d;
        }
        sum += best;
    }
    return sum / static_cast<double>(from.points.size());
}

struct AxisFrame {
    // Projection along `axis` maps voxel (x, y, z) to pixel (row, col).
    int rows = 0, cols = 0;
};

AxisFrame axis_frame(const Dims3& dims, Axis axis) {
    switch (axis) {
        case Axis::x: return {dims.w, dims.d};  // (y, z)
        case Axis::y: return {dims.h, dims.d};  // (x, z)
        case Axis::z: return {dims.h, dims.w};  // (x, y)
    }
    throw numeric_error("invalid projection axis");
}

void pixel_of(Axis axis, int x, int y, int z, int& r, int& c) {
    switch (axis) {
        case Axis::x: r = y; c = z; return;
        case Axis::y: r = x; c = z; return;
        case Axis::z: r = x; c = y; return;
    }
    throw numeric_error("invalid projection axis");
}

}  // namespace

PointSet pointset_from_coords(std::span<const Coord3> coords, int resolution) {
    if (resolution <= 0) throw numeric_error("point set resolution must be positive");
    PointSet out;
    out.points.reserve(coords.size());
    const double inv = 1.0 / static_cast<double>(resolution);
    for (const auto& c : coords) {
        out.points.push_back({(c[0] + 0.5) * inv, (c[1] + 0.5) * inv, (c[2] + 0.5) * inv});
    }
    return out;
}

double chamfer(const PointSet& a, const PointSet& b) {
    if (a.points.empty() || b.points.empty()) {
        throw numeric_error("chamfer distance requires non-empty point sets");
    }
    return 0.5 * (directed_mean_nn(a, b) + directed_mean_nn(b, a));
}

Projection2D project_ortho(const DenseLatentGrid& grid, Axis axis) {
    grid.validate();
    const AxisFrame frame = axis_frame(grid.dims, axis);
    Projection2D img;
    img.rows = frame.rows;
    img.cols = frame.cols;
    img.values.assign(std::size_t(frame.rows) * std::size_t(frame.cols), 0.0);
    std::vector<int> counts(img.values.size(), 0);

    for (int z = 0; z < grid.dims.d; ++z) {
        for (int y = 0; y < grid.dims.w; ++y) {
            for (int x = 0; x < grid.dims.h; ++x) {
                bool occupied = false;
                double sq = 0.0;
                for (int c = 0; c < grid.channels; ++c) {
                    const double v = grid.at(x, y, z, c);
                    if (v != 0.0) occupied = true;
                    sq += v * v;
                }
                if (!occupied) continue;
                int r = 0, col = 0;
                pixel_of(axis, x, y, z, r, col);
                img.at(r, col) += std::sqrt(sq);
                counts[std::size_t(r) * std::size_t(img.cols) + std::size_t(col)] += 1;
            }
        }
    }
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        if (counts[i] > 0) img.values[i] /= static_cast<double>(counts[i]);
    }
    return img;
}

std::vector<std::uint8_t> preserved_pixel_mask(const BinaryMask3D& mask, Axis axis) {
    mask.validate();
    const AxisFrame frame = axis_frame(mask.dims, axis);
    std::vector<std::uint8_t> preserved(std::size_t(frame.rows) * std::size_t(frame.cols), 1);
    for (int z = 0; z < mask.dims.d; ++z) {
        for (int y = 0; y < mask.dims.w; ++y) {
            for (int x = 0; x < mask.dims.h; ++x) {
                if (!mask.test(x, y, z)) continue;
                int r = 0, c = 0;
                pixel_of(axis, x, y, z, r, c);
                preserved[std::size_t(r) * std::size_t(frame.cols) + std::size_t(c)] = 0;
            }
        }
    }
    return preserved;
}

namespace {

void check_image_pair(const Projection2D& a, const Projection2D& b,
                      std::span<const std::uint8_t> mask) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw numeric_error("projected images have mismatched shapes");
    }
    if (a.values.size() != std::size_t(a.rows) * std::size_t(a.cols) ||
        b.values.size() != a.values.size()) {
        throw numeric_error("projected image buffer size mismatch");
    }
    if (mask.size() != a.values.size()) {
        throw numeric_error("pixel mask size does not match image");
    }
}

}  // namespace

double masked_psnr(const Projection2D& a, const Projection2D& b,
                   std::span<const std::uint8_t> mask) {
    check_image_pair(a, b, mask);
    double sum_sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double d = a.values[i] - b.values[i];
        sum_sq += d * d;
        ++n;
    }
    if (n == 0) throw numeric_error("masked PSNR requires at least one masked pixel");
    const double mse = sum_sq / static_cast<double>(n);
    if (mse == 0.0) return 99.0;
    const double psnr = 10.0 * std::log10(1.0 / mse);
    return psnr > 99.0 ? 99.0 : psnr;
}

double masked_ssim(const Projection2D& a, const Projection2D& b,
                   std::span<const std::uint8_t> mask) {
    check_image_pair(a, b, mask);
    constexpr int kHalf = 3;  // 7x7 window
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;

    double total = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < a.rows; ++r) {
        for (int c = 0; c < a.cols; ++c) {
            if (!mask[std::size_t(r) * std::size_t(a.cols) + std::size_t(c)]) continue;
            const int r0 = std::max(0, r - kHalf), r1 = std::min(a.rows - 1, r + kHalf);
            const int c0 = std::max(0, c - kHalf), c1 = std::min(a.cols - 1, c + kHalf);
            const double count = double(r1 - r0 + 1) * double(c1 - c0 + 1);

            double mu_a = 0.0, mu_b = 0.0;
            for (int i = r0; i <= r1; ++i) {
                for (int j = c0; j <= c1; ++j) {
                    mu_a += a.at(i, j);
                    mu_b += b.at(i, j);
                }
            }
            mu_a /= count;
            mu_b /= count;

            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int i = r0; i <= r1; ++i) {
                for (int j = c0; j <= c1; ++j) {
                    const double da = a.at(i, j) - mu_a;
                    const double db = b.at(i, j) - mu_b;
                    var_a += da * da;
                    var_b += db * db;
                    cov += da * db;
                }
            }
            var_a /= count;
            var_b /= count;
            cov /= count;

            const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
            const double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
            total += num / den;
            ++n;
        }
    }
    if (n == 0) throw numeric_error("masked SSIM requires at least one masked pixel");
    return total / static_cast<double>(n);
}

}  // namespace voxflow
