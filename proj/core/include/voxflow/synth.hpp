#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "voxflow/asset.hpp"
#include "voxflow/lattice.hpp"

namespace voxflow {

enum class ShapeKind { sphere, box, shape_union, l_shape };

const char* shape_kind_name(ShapeKind kind);
ShapeKind parse_shape_kind(std::string_view name);

// Implicit shape in normalized [0,1]^3 coordinates. `shape_union` is the union
// of the sphere and the box; `l_shape` is the box with its upper-corner octant
// removed.
struct ShapeSpec {
    ShapeKind kind = ShapeKind::sphere;
    std::array<double, 3> center{0.5, 0.5, 0.5};
    double radius = 0.35;
    std::array<double, 3> box_lo{0.25, 0.25, 0.25};
    std::array<double, 3> box_hi{0.75, 0.75, 0.75};
    std::uint64_t seed = 0;

    bool inside(const std::array<double, 3>& p) const;
    void validate() const;
};

inline constexpr int kStChannels = 2;  // occupancy + one coarse feature

// Deterministic synthetic asset: occupancy from the implicit shape sampled at
// voxel centers; sparse features are the voxel-center coordinates (channels
// 0..2) followed by seeded sinusoids of position. All generated values are
// exactly representable in f32 so disk round-trips are bitwise.
Asset gen_asset(const ShapeSpec& spec, int n_st, int n_slat, int c_slat);

enum class RegionKind { octant, ball, slab };

// Edit region at coarse-grid resolution. Octants split each axis at the
// midplane with sign +1 = upper half; a radius-0 ball selects the single voxel
// containing its center; a slab selects voxel centers with lo <= p_axis <= hi.
struct RegionSpec {
    RegionKind kind = RegionKind::octant;
    std::array<int, 3> octant{+1, +1, +1};
    std::array<double, 3> center{0.5, 0.5, 0.5};
    double radius = 0.0;
    Axis axis = Axis::x;
    double lo = 0.0;
    double hi = 0.0;

    void validate() const;
};

// Compact textual form used by configs and the CLI:
//   "octant:+++"  "ball:0.5,0.5,0.5,0.2"  "slab:x,0.25,0.75"
RegionSpec parse_region(std::string_view text);
std::string region_to_string(const RegionSpec& region);

struct ScenarioReport {
    std::size_t mask_count = 0;           // voxels in the mask
    std::size_t mask_active_overlap = 0;  // |mask ∩ occupied|
    std::size_t keep_count = 0;           // |active ∖ mask| on the coarse grid
    bool empty_region = false;            // region missed the grid entirely
};

// Edit mask for the region over the asset's coarse grid. A region that misses
// the grid yields an empty mask and sets the report's warning flag.
BinaryMask3D gen_edit_scenario(const Asset& asset, const RegionSpec& region,
                               ScenarioReport* report = nullptr);

}  // namespace voxflow
