// Microbenchmarks over the engine's hot paths: attention-field evaluation,
// solver traversals (with and without K/V capture), mask morphology, the
// blending kernels, and the geometry metric.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "voxflow/editor.hpp"
#include "voxflow/fields.hpp"
#include "voxflow/kvstore.hpp"
#include "voxflow/lattice.hpp"
#include "voxflow/metrics.hpp"
#include "voxflow/pipeline.hpp"
#include "voxflow/rng.hpp"
#include "voxflow/solver.hpp"
#include "voxflow/toy_transformer.hpp"

namespace {

using namespace voxflow;

std::vector<double> gaussian_vec(std::uint64_t seed, std::size_t n) {
    SeededRng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

// First `n` coordinates of a 16^3 enumeration, already in canonical order.
std::vector<Coord3> leading_coords(std::size_t n) {
    std::vector<Coord3> coords;
    coords.reserve(n);
    for (int x = 0; x < 16 && coords.size() < n; ++x)
        for (int y = 0; y < 16 && coords.size() < n; ++y)
            for (int z = 0; z < 16 && coords.size() < n; ++z) coords.push_back({x, y, z});
    return coords;
}

BinaryMask3D center_ball_mask(int side) {
    BinaryMask3D mask = BinaryMask3D::zeros({side, side, side});
    const double c = side / 2.0, r = side / 4.0;
    for (int z = 0; z < side; ++z)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                const double dx = x + 0.5 - c, dy = y + 0.5 - c, dz = z + 0.5 - c;
                if (dx * dx + dy * dy + dz * dz <= r * r) mask.set(x, y, z);
            }
    return mask;
}

// Attention-field evaluation cost against token count (the dominant cost of
// every traversal; quadratic in tokens).
void BM_toy_field_eval(benchmark::State& state) {
    const std::size_t tokens = std::size_t(state.range(0));
    const ToyArch arch{};  // 4 layers, dim 64
    const int channels = 4;
    auto field = make_toy_transformer(arch, channels,
                                      TokenLayout::sparse_set(16, leading_coords(tokens)), 3);
    const auto cond = make_condition(CondMode::conditional, "bench", kToyCondWidth);
    const auto x = gaussian_vec(5, field->state_size());
    for (auto _ : state) {
        benchmark::DoNotOptimize(eval_velocity(*field, x, 0.5, cond));
    }
    state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(tokens));
}
BENCHMARK(BM_toy_field_eval)->Arg(64)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

// Full inversion traversal against step count (two evaluations per step plus
// bookkeeping; guidance gating doubles late-interval evaluations).
void BM_invert_traversal(benchmark::State& state) {
    const int steps = int(state.range(0));
    const ToyArch arch{.layers = 2, .model_dim = 16, .heads = 2, .ffn_mult = 2};
    auto field = make_toy_transformer(arch, 2, TokenLayout::dense_grid(4), 3);
    const Schedule sched = make_schedule(steps);
    const GuidanceConfig g{};
    const auto cond = make_condition(CondMode::conditional, "bench", kToyCondWidth);
    const auto neg = make_condition(CondMode::negative, "", kToyCondWidth);
    const auto x0 = gaussian_vec(5, field->state_size());
    for (auto _ : state) {
        benchmark::DoNotOptimize(invert(*field, sched, x0, g, cond, neg, nullptr));
    }
}
BENCHMARK(BM_invert_traversal)->Arg(4)->Arg(8)->Arg(16)->Arg(25)->Unit(benchmark::kMillisecond);

// The same traversal with attention K/V capture armed, to expose the cache
// overhead (f32 rounding plus map inserts on every layer of every eval).
void BM_invert_with_capture(benchmark::State& state) {
    const int steps = int(state.range(0));
    const ToyArch arch{.layers = 2, .model_dim = 16, .heads = 2, .ffn_mult = 2};
    const TokenLayout layout = TokenLayout::dense_grid(4);
    auto field = make_toy_transformer(arch, 2, layout, 3);
    const Schedule sched = make_schedule(steps);
    const GuidanceConfig g{};
    const auto cond = make_condition(CondMode::conditional, "bench", kToyCondWidth);
    const auto neg = make_condition(CondMode::negative, "", kToyCondWidth);
    const auto x0 = gaussian_vec(5, field->state_size());
    for (auto _ : state) {
        KVCacheStore store(Stage::st, layout.coords);
        benchmark::DoNotOptimize(invert(*field, sched, x0, g, cond, neg, &store));
    }
}
BENCHMARK(BM_invert_with_capture)->Arg(4)->Arg(8)->Arg(16)->Arg(25)->Unit(benchmark::kMillisecond);

// Chebyshev dilation of the edit mask.
void BM_dilate_mask(benchmark::State& state) {
    const BinaryMask3D mask = center_ball_mask(int(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(dilate_mask(mask, 2));
    }
}
BENCHMARK(BM_dilate_mask)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// Exact squared Euclidean distance transform (three separable passes).
void BM_distance_transform(benchmark::State& state) {
    const BinaryMask3D mask = center_ball_mask(int(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(squared_distance_transform(mask));
    }
}
BENCHMARK(BM_distance_transform)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// Full soft-mask construction: dilation, distance transform, falloff.
void BM_soft_edit_mask(benchmark::State& state) {
    const BinaryMask3D mask = center_ball_mask(int(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(soft_edit_mask(mask, 2, 1.5));
    }
}
BENCHMARK(BM_soft_edit_mask)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// Per-step dense latent blend (the per-voxel replacement kernel).
void BM_blend_st_latent(benchmark::State& state) {
    const int side = int(state.range(0));
    const Dims3 dims{side, side, side};
    const int channels = 2;
    const auto current = gaussian_vec(1, dims.total() * std::size_t(channels));
    const auto cached = gaussian_vec(2, dims.total() * std::size_t(channels));
    SoftMask3D weights{dims, std::vector<double>(dims.total())};
    SeededRng rng(3);
    for (double& w : weights.weights) w = rng.uniform();
    std::vector<double> out(current.size());
    for (auto _ : state) {
        blend_st_latent(current, cached, weights, dims, channels, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetBytesProcessed(std::int64_t(state.iterations()) *
                            std::int64_t(out.size() * sizeof(double)));
}
BENCHMARK(BM_blend_st_latent)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// Row-wise K/V replacement at a realistic token count and row width.
void BM_replace_kv(benchmark::State& state) {
    const int tokens = int(state.range(0));
    const int row_width = 64;
    const std::size_t n = std::size_t(tokens) * std::size_t(row_width);
    const auto fresh = gaussian_vec(1, n);
    const auto cached = gaussian_vec(2, n);
    std::vector<double> weights(std::size_t(tokens), 0.0);
    SeededRng rng(3);
    for (double& w : weights) w = rng.uniform() < 0.5 ? 0.0 : 1.0;
    std::vector<double> out(n);
    for (auto _ : state) {
        replace_kv(fresh, cached, weights, tokens, row_width, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetBytesProcessed(std::int64_t(state.iterations()) * std::int64_t(n * sizeof(double)));
}
BENCHMARK(BM_replace_kv)->Arg(128)->Arg(512)->Arg(1024)->Unit(benchmark::kMicrosecond);

// Brute-force symmetric chamfer distance (quadratic in points).
void BM_chamfer(benchmark::State& state) {
    const std::size_t n = std::size_t(state.range(0));
    SeededRng rng(9);
    PointSet a, b;
    a.points.resize(n);
    b.points.resize(n);
    for (auto& p : a.points) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    for (auto& p : b.points) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    for (auto _ : state) {
        benchmark::DoNotOptimize(chamfer(a, b));
    }
}
BENCHMARK(BM_chamfer)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
