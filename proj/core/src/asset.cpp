#include "voxflow/asset.hpp"

#include <string>

#include "voxflow/errors.hpp"

namespace voxflow {

Coord3 map_coord(const Coord3& c, int from_res, int to_res) {
    if (from_res <= 0 || to_res <= 0) throw numeric_error("resolutions must be positive");
    Coord3 out;
    for (int i = 0; i < 3; ++i) {
        out[i] = static_cast<int>((static_cast<long long>(c[i]) * to_res) / from_res);
    }
    return out;
}

std::vector<Coord3> occupied_coords(const DenseLatentGrid& grid) {
    std::vector<Coord3> coords;
    for (int x = 0; x < grid.dims.h; ++x) {
        for (int y = 0; y < grid.dims.w; ++y) {
            for (int z = 0; z < grid.dims.d; ++z) {
                if (grid.at(x, y, z, 0) > kOccupancyThreshold) coords.push_back({x, y, z});
            }
        }
    }
    return coords;
}

CoordinateSet slat_coords_on_st(const Asset& asset) {
    std::vector<Coord3> mapped;
    mapped.reserve(asset.slat.coords.size());
    for (const auto& c : asset.slat.coords) {
        mapped.push_back(map_coord(c, asset.slat.resolution, asset.st_grid.dims.h));
    }
    return CoordinateSet::from_unsorted(std::move(mapped));
}

void Asset::validate() const {
    st_grid.validate();
    slat.validate();
    if (!st_grid.dims.cubic()) throw numeric_error("asset coarse grid must be cubic");
    if (st_grid.channels < 1) throw numeric_error("asset coarse grid needs an occupancy channel");
    for (int z = 0; z < st_grid.dims.d; ++z) {
        for (int y = 0; y < st_grid.dims.w; ++y) {
            for (int x = 0; x < st_grid.dims.h; ++x) {
                const double occ = st_grid.at(x, y, z, 0);
                if (occ != 0.0 && occ != 1.0) {
                    throw numeric_error("asset occupancy channel must be exactly 0 or 1");
                }
            }
        }
    }
    const int n_st = st_grid.dims.h;
    for (const auto& c : slat.coords) {
        const Coord3 m = map_coord(c, slat.resolution, n_st);
        if (!st_grid.dims.contains(m) || st_grid.at(m[0], m[1], m[2], 0) <= kOccupancyThreshold) {
            throw numeric_error("sparse coordinate (" + std::to_string(c[0]) + ", " +
                                std::to_string(c[1]) + ", " + std::to_string(c[2]) +
                                ") does not map into an occupied coarse voxel");
        }
    }
}

}  // namespace voxflow
