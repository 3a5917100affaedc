#pragma once

#include "voxflow/lattice.hpp"

namespace voxflow {

// Two-stage latent asset: a dense coarse grid whose channel 0 is occupancy in
// {0, 1} (plus any coarse feature channels), and a sparse per-voxel feature
// set anchored inside the occupied region.
struct Asset {
    DenseLatentGrid st_grid;  // channel 0 = occupancy
    SparseLatentSet slat;

    // Enforces grid/sparse validity, a cubic grid, binary occupancy, and that
    // every sparse coordinate maps into an occupied coarse voxel.
    void validate() const;
};

inline constexpr double kOccupancyThreshold = 0.5;

// Containing coarse voxel of a fine coordinate under resolution block mapping
// (identity when the resolutions match).
Coord3 map_coord(const Coord3& c, int from_res, int to_res);

// Sparse coordinates mapped onto the coarse grid, deduplicated, canonical order.
CoordinateSet slat_coords_on_st(const Asset& asset);

// Occupied voxels of a grid's occupancy channel, canonical order.
std::vector<Coord3> occupied_coords(const DenseLatentGrid& grid);

}  // namespace voxflow
