#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "voxflow/asset.hpp"
#include "voxflow/pipeline.hpp"
#include "voxflow/solver.hpp"

namespace voxflow {

// Asset directory: st.vxg + slat.vxs + meta.json. The meta file records a
// checksum per payload file; load verifies them before parsing.
void save_asset(const std::filesystem::path& dir, const Asset& asset);
Asset load_asset(const std::filesystem::path& dir);

// Trajectory directory: one raw little-endian f64 file per recorded time
// plus manifest.json (stage, exact hexfloat times, state size, checksums).
// The round trip is bitwise — these states feed straight back into
// replacement arithmetic.
void save_trajectory(const std::filesystem::path& dir, const TrajectoryCache& trajectory);
TrajectoryCache load_trajectory(const std::filesystem::path& dir);

// Inversion bundle directory:
//   manifest.json    schedule / guidance / stats (hexfloat), eval counts,
//                    source-asset checksum
//   st_trajectory/, slat_trajectory/
//   st_kv/, slat_kv/ present only for stages that captured K/V
void save_inversion_bundle(const std::filesystem::path& dir, const InversionBundle& bundle);
InversionBundle load_inversion_bundle(const std::filesystem::path& dir);

// Run manifest: verb, resolved configuration, produced artifacts, free-form
// extras, plus a timestamp. Everything except the timestamp is deterministic
// for a fixed configuration.
void write_run_manifest(const std::filesystem::path& file, const std::string& verb,
                        const std::map<std::string, std::string>& resolved,
                        const std::map<std::string, std::string>& artifacts,
                        const std::map<std::string, std::string>& extras);

// Manifest text with the timestamp erased; equal text means equal runs.
std::string manifest_comparable_text(const std::filesystem::path& path);

}  // namespace voxflow
