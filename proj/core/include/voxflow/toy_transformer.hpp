#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "voxflow/fields.hpp"
#include "voxflow/lattice.hpp"

namespace voxflow {

// Architecture of the toy velocity transformer.
struct ToyArch {
    int layers = 4;
    int model_dim = 64;
    int heads = 4;
    int ffn_mult = 2;

    void validate() const;
};

// Fixed conditioning width every toy field declares.
inline constexpr int kToyCondWidth = 8;

// Hard cap on token count; keeps evaluations desk-scale.
inline constexpr std::size_t kToyMaxTokens = 1024;

// Maps latent values to transformer tokens. Dense layouts tokenize every
// voxel of a side^3 grid (one token per voxel, canonical coordinate order,
// state in grid-planar layout); sparse layouts tokenize a fixed active
// coordinate set (state rows contiguous per token).
struct TokenLayout {
    int grid_side = 0;
    bool dense = false;
    std::vector<Coord3> coords;  // canonical order

    static TokenLayout dense_grid(int side);
    static TokenLayout sparse_set(int side, std::vector<Coord3> coords);

    std::size_t tokens() const { return coords.size(); }
    void validate() const;
};

// Deterministic attention+FFN velocity field. Weights are generated from
// (arch, channels, seed) only, so two instances with different token layouts
// share the same network. Evaluation order (tokens, heads, reductions) is
// fixed, making outputs bitwise reproducible for identical inputs.
std::unique_ptr<VelocityField> make_toy_transformer(const ToyArch& arch, int channels,
                                                    TokenLayout layout, std::uint64_t seed);

}  // namespace voxflow
