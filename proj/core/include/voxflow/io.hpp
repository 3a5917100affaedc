#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "voxflow/lattice.hpp"

namespace voxflow {

// Dense grid format (.vxg):
//   magic "VXG1", u32 H, u32 W, u32 D, u32 C, then H*W*D*C f32 values,
//   all little-endian, x fastest / channel slowest (the in-memory layout).
// Sparse set format (.vxs):
//   magic "VXS1", u32 N, u32 C, u32 count, then count records of
//   (u16 x, u16 y, u16 z, u16 pad=0, C x f32), coordinates in canonical order.
// Both readers and writers reject non-finite values; masks ride in .vxg with
// C=1 and values restricted to {0,1}.

void write_vxg(const std::filesystem::path& path, const DenseLatentGrid& grid);
DenseLatentGrid read_vxg(const std::filesystem::path& path);

void write_vxs(const std::filesystem::path& path, const SparseLatentSet& sparse);
SparseLatentSet read_vxs(const std::filesystem::path& path);

void write_mask_vxg(const std::filesystem::path& path, const BinaryMask3D& mask);
BinaryMask3D read_mask_vxg(const std::filesystem::path& path);

// FNV-1a 64 over the file bytes, rendered as "fnv1a64:<16 hex digits>".
std::string file_checksum(const std::filesystem::path& path);

// Same rendering for an already-computed hash (see fnv1a64 in rng.hpp).
std::string checksum_string(std::uint64_t hash);

// Exact textual form of a double (hexfloat); round-trips bitwise.
std::string double_to_hex(double v);
double hex_to_double(const std::string& s);

}  // namespace voxflow
