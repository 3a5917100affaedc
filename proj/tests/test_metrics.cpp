#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "voxflow/metrics.hpp"
#include "voxflow/rng.hpp"

using namespace voxflow;

namespace {

// Oracle computed from the full pairwise distance matrix (different loop
// structure and accumulation order from the library's streaming version).
double chamfer_oracle(const PointSet& a, const PointSet& b) {
    const std::size_t na = a.points.size(), nb = b.points.size();
    std::vector<double> dists(na * nb);
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            double sq = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double d = a.points[i][k] - b.points[j][k];
                sq += d * d;
            }
            dists[i * nb + j] = std::sqrt(sq);
        }
    }
    std::vector<double> row_min(na), col_min(nb);
    for (std::size_t i = 0; i < na; ++i) {
        row_min[i] = *std::min_element(dists.begin() + std::ptrdiff_t(i * nb),
                                       dists.begin() + std::ptrdiff_t((i + 1) * nb));
    }
    for (std::size_t j = 0; j < nb; ++j) {
        double best = dists[j];
        for (std::size_t i = 1; i < na; ++i) best = std::min(best, dists[i * nb + j]);
        col_min[j] = best;
    }
    const double ma = std::accumulate(row_min.rbegin(), row_min.rend(), 0.0) / double(na);
    const double mb = std::accumulate(col_min.rbegin(), col_min.rend(), 0.0) / double(nb);
    return 0.5 * (ma + mb);
}

PointSet random_points(std::size_t n, std::uint64_t seed) {
    SeededRng rng(seed);
    PointSet p;
    p.points.resize(n);
    for (auto& q : p.points) {
        for (int k = 0; k < 3; ++k) q[std::size_t(k)] = rng.uniform();
    }
    return p;
}

DenseLatentGrid random_grid(Dims3 dims, int channels, double sparsity, std::uint64_t seed) {
    DenseLatentGrid g = DenseLatentGrid::zeros(dims, channels);
    SeededRng rng(seed);
    for (int z = 0; z < dims.d; ++z) {
        for (int y = 0; y < dims.w; ++y) {
            for (int x = 0; x < dims.h; ++x) {
                if (rng.uniform() < sparsity) continue;  // leave the voxel empty
                for (int c = 0; c < channels; ++c) g.at(x, y, z, c) = rng.gaussian();
            }
        }
    }
    return g;
}

// Independent projection oracle: walk pixels, scan each column explicitly.
Projection2D project_oracle(const DenseLatentGrid& g, Axis axis) {
    const int ai = axis_index(axis);
    const int ext[3] = {g.dims.h, g.dims.w, g.dims.d};
    const int other[2] = {ai == 0 ? 1 : 0, ai == 2 ? 1 : 2};
    Projection2D img;
    img.rows = ext[other[0]];
    img.cols = ext[other[1]];
    img.values.assign(std::size_t(img.rows) * std::size_t(img.cols), 0.0);
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) {
            double sum = 0.0;
            int count = 0;
            for (int t = 0; t < ext[ai]; ++t) {
                int xyz[3];
                xyz[ai] = t;
                xyz[other[0]] = r;
                xyz[other[1]] = c;
                double sq = 0.0;
                bool occ = false;
                for (int ch = 0; ch < g.channels; ++ch) {
                    const double v = g.at(xyz[0], xyz[1], xyz[2], ch);
                    if (v != 0.0) occ = true;
                    sq += v * v;
                }
                if (occ) {
                    sum += std::sqrt(sq);
                    ++count;
                }
            }
            if (count > 0) img.at(r, c) = sum / double(count);
        }
    }
    return img;
}

}  // namespace

TEST_CASE("point sets come from voxel centers in the unit cube") {
    const std::vector<Coord3> coords{{0, 0, 0}, {3, 1, 2}};
    const PointSet p = pointset_from_coords(coords, 4);
    CHECK(p.points[0] == std::array<double, 3>{0.125, 0.125, 0.125});
    CHECK(p.points[1] == std::array<double, 3>{0.875, 0.375, 0.625});
    CHECK_THROWS_AS(pointset_from_coords(coords, 0), Error);
}

TEST_CASE("chamfer distance on hand-checkable sets") {
    PointSet a, b;
    a.points = {{0, 0, 0}};
    b.points = {{1, 0, 0}, {2, 0, 0}};
    // a->b min is 1; b->a distances are 1 and 2, mean 1.5.
    CHECK(chamfer(a, b) == doctest::Approx(0.5 * (1.0 + 1.5)).epsilon(1e-15));
    CHECK(chamfer(a, a) == 0.0);
    CHECK(chamfer(a, b) == chamfer(b, a));  // symmetric by construction
    PointSet empty;
    CHECK_THROWS_AS(chamfer(a, empty), Error);
    CHECK_THROWS_AS(chamfer(empty, b), Error);
}

TEST_CASE("chamfer distance matches the matrix oracle on random sets") {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        SeededRng rng(trial * 91 + 7);
        const std::size_t na = 1 + std::size_t(rng.uniform() * 63.0);
        const std::size_t nb = 1 + std::size_t(rng.uniform() * 63.0);
        const PointSet a = random_points(na, trial * 2 + 100);
        const PointSet b = random_points(nb, trial * 2 + 101);
        CHECK(chamfer(a, b) == doctest::Approx(chamfer_oracle(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("orthographic projections match the per-column oracle") {
    const Dims3 dims{3, 4, 5};  // distinct extents catch axis mixups
    const DenseLatentGrid g = random_grid(dims, 2, 0.4, 77);
    for (Axis axis : {Axis::x, Axis::y, Axis::z}) {
        const Projection2D img = project_ortho(g, axis);
        const Projection2D want = project_oracle(g, axis);
        REQUIRE(img.rows == want.rows);
        REQUIRE(img.cols == want.cols);
        for (std::size_t i = 0; i < want.values.size(); ++i) {
            CHECK(img.values[i] == doctest::Approx(want.values[i]).epsilon(1e-13));
        }
    }
    CHECK(project_ortho(g, Axis::x).rows == 4);
    CHECK(project_ortho(g, Axis::x).cols == 5);
    CHECK(project_ortho(g, Axis::y).rows == 3);
    CHECK(project_ortho(g, Axis::y).cols == 5);
    CHECK(project_ortho(g, Axis::z).rows == 3);
    CHECK(project_ortho(g, Axis::z).cols == 4);
}

TEST_CASE("pixel preservation marks columns containing mask voxels") {
    BinaryMask3D mask = BinaryMask3D::zeros(Dims3{2, 3, 4});
    mask.set(1, 2, 0);
    mask.set(1, 2, 3);
    SUBCASE("along z both hits share pixel (1,2)") {
        const auto m = preserved_pixel_mask(mask, Axis::z);  // 2x3 image
        int zeros = 0;
        for (std::size_t i = 0; i < m.size(); ++i) zeros += m[i] == 0;
        CHECK(zeros == 1);
        CHECK(m[1 * 3 + 2] == 0);
    }
    SUBCASE("along x the hits land at (y,z) = (2,0) and (2,3)") {
        const auto m = preserved_pixel_mask(mask, Axis::x);  // 3x4 image
        CHECK(m[2 * 4 + 0] == 0);
        CHECK(m[2 * 4 + 3] == 0);
        int zeros = 0;
        for (std::size_t i = 0; i < m.size(); ++i) zeros += m[i] == 0;
        CHECK(zeros == 2);
    }
    SUBCASE("an empty mask preserves every pixel") {
        const auto m = preserved_pixel_mask(BinaryMask3D::zeros(Dims3{2, 3, 4}), Axis::y);
        CHECK(std::count(m.begin(), m.end(), 1) == std::ptrdiff_t(m.size()));
    }
}

TEST_CASE("masked PSNR has the textbook values") {
    Projection2D a;
    a.rows = 4;
    a.cols = 4;
    a.values.assign(16, 0.25);
    Projection2D b = a;
    const std::vector<std::uint8_t> full(16, 1);

    CHECK(masked_psnr(a, b, full) == 99.0);  // exact zero MSE caps at 99

    for (double& v : b.values) v += 0.5;  // uniform offset: MSE = 0.25
    CHECK(masked_psnr(a, b, full) == doctest::Approx(6.020599913279624).epsilon(1e-12));

    // Masking out every differing pixel restores the cap.
    Projection2D c = a;
    c.values[5] = 0.9;
    std::vector<std::uint8_t> hole(16, 1);
    hole[5] = 0;
    CHECK(masked_psnr(a, c, hole) == 99.0);

    CHECK_THROWS_AS(masked_psnr(a, b, std::vector<std::uint8_t>(16, 0)), Error);
    CHECK_THROWS_AS(masked_psnr(a, b, std::vector<std::uint8_t>(8, 1)), Error);
    Projection2D wrong;
    wrong.rows = 2;
    wrong.cols = 8;
    wrong.values.assign(16, 0.0);
    CHECK_THROWS_AS(masked_psnr(a, wrong, full), Error);
}

TEST_CASE("masked SSIM is exactly one for identical images") {
    SeededRng rng(9);
    Projection2D a;
    a.rows = 9;
    a.cols = 6;
    a.values.resize(54);
    for (double& v : a.values) v = rng.uniform();
    const std::vector<std::uint8_t> full(54, 1);
    CHECK(masked_ssim(a, a, full) == 1.0);

    SUBCASE("constant images follow the closed form") {
        Projection2D ca = a, cb = a;
        const double alpha = 0.25, beta = 0.75;
        ca.values.assign(54, alpha);
        cb.values.assign(54, beta);
        constexpr double kC1 = 0.01 * 0.01;
        const double want = (2.0 * alpha * beta + kC1) / (alpha * alpha + beta * beta + kC1);
        CHECK(masked_ssim(ca, cb, full) == doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("a perturbation outside every masked window is invisible") {
        // 9x6 image: pixel (0,0) has window rows 0..3, cols 0..3. Mask only
        // (8,5), whose window covers rows 5..8, cols 2..5; perturb (0,0).
        Projection2D b = a;
        b.values[0] += 0.3;
        std::vector<std::uint8_t> corner(54, 0);
        corner[8 * 6 + 5] = 1;
        CHECK(masked_ssim(a, b, corner) == 1.0);
        std::vector<std::uint8_t> origin(54, 0);
        origin[0] = 1;
        CHECK(masked_ssim(a, b, origin) < 1.0);
    }
    SUBCASE("degenerate masks and shapes are errors") {
        CHECK_THROWS_AS(masked_ssim(a, a, std::vector<std::uint8_t>(54, 0)), Error);
        CHECK_THROWS_AS(masked_ssim(a, a, std::vector<std::uint8_t>(53, 1)), Error);
    }
}
