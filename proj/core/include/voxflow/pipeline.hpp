#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "voxflow/asset.hpp"
#include "voxflow/editor.hpp"
#include "voxflow/fields.hpp"
#include "voxflow/kvstore.hpp"
#include "voxflow/solver.hpp"
#include "voxflow/toy_transformer.hpp"

namespace voxflow {

// Per-channel feature statistics for sparse-set normalization. Population
// standard deviation; constant channels fall back to stddev 1 (and normalize
// to exact zeros).
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    void validate() const;
};

NormStats compute_norm_stats(const SparseLatentSet& slat);
SparseLatentSet normalize_features(const SparseLatentSet& slat, const NormStats& stats);
SparseLatentSet denormalize_features(const SparseLatentSet& slat, const NormStats& stats);
std::pair<SparseLatentSet, NormStats> normalize_features(const SparseLatentSet& slat);

// Which velocity field drives a stage.
enum class FieldKind { toy, constant, linear, time_poly, affine };

const char* field_kind_name(FieldKind kind);
FieldKind parse_field_kind(std::string_view name);

struct FieldSpec {
    FieldKind kind = FieldKind::toy;
    ToyArch arch{};
    std::uint64_t weight_seed = 1;  // toy weights / affine coefficients
    double constant = 0.25;         // constant-field velocity
    double lambda = -0.5;           // linear-field rate

    void validate() const;
};

// Geometry of one stage's latent. Dense shapes cover a full side^3 grid in
// planar layout; sparse shapes hold one contiguous feature row per coordinate.
struct StageLatentShape {
    int grid_side = 0;
    int channels = 0;
    bool dense = true;
    std::vector<Coord3> coords;  // sparse shapes only, canonical order

    std::size_t tokens() const {
        return dense ? std::size_t(grid_side) * std::size_t(grid_side) * std::size_t(grid_side)
                     : coords.size();
    }
    std::size_t state_size() const { return tokens() * std::size_t(channels); }
};

// Instantiates the field for one stage. Only the toy transformer tokenizes
// the shape (and enforces the token cap); analytic fields act elementwise.
std::unique_ptr<VelocityField> make_stage_field(const FieldSpec& spec,
                                                const StageLatentShape& shape);

// Condition embedding sized for `width`; an empty name is the all-zero
// embedding carrying only the branch tag. Width 0 (a conditionless field)
// yields an empty embedding with the tag alone.
ConditionInput make_condition(CondMode mode, const std::string& name, int width);

struct RunConfig {
    int steps = 25;
    Schedule::Kind schedule_kind = Schedule::Kind::uniform;
    double schedule_exponent = 3.0;  // shifted schedules only
    GuidanceConfig guidance{};       // omega 5.0 gated on [0.5, 1.0]

    bool latent_replacement = true;
    bool use_soft_mask = false;
    int dilation_radius = 2;
    double sigma = 1.5;
    bool use_kv_replacement = true;
    bool use_attention_mask = false;

    std::string cond_name = "edit-target";
    std::string neg_name;  // empty = zero embedding

    FieldSpec st_field{};
    FieldSpec slat_field{};

    std::uint64_t seed = 0;  // fresh-noise draws

    void validate() const;
    EditOptions edit_options() const;
    Schedule make_run_schedule() const;
};

struct RunReport {
    long st_invert_evals = 0;
    long st_edit_evals = 0;
    long slat_invert_evals = 0;
    long slat_edit_evals = 0;
    std::size_t st_kv_entries = 0;
    std::size_t slat_kv_entries = 0;
    std::size_t active_before = 0;
    std::size_t active_after = 0;
    std::size_t keep_count = 0;
    std::size_t new_coords = 0;
    bool slat_kv_replacement_used = false;

    // FNV-1a checksums over canonical-order raw values; input/output pairs
    // matching certifies preservation.
    std::string preserved_grid_checksum_in;
    std::string preserved_grid_checksum_out;
    std::string keep_features_checksum_in;
    std::string keep_features_checksum_out;

    std::vector<std::string> warnings;
};

struct EditOutcome {
    Asset asset;
    RunReport report;
};

// Everything the masked denoising passes consume: per-stage trajectories,
// captured attention K/V (populated whenever the stage field has attention
// layers), and the feature normalization used at inversion time. Mask
// independent, so one bundle serves any number of edits of the same asset.
struct InversionBundle {
    Schedule schedule;
    GuidanceConfig guidance;
    NormStats stats;
    TrajectoryCache st_trajectory;
    TrajectoryCache slat_trajectory;
    KVCacheStore st_kv;
    KVCacheStore slat_kv;
    long st_field_evals = 0;
    long slat_field_evals = 0;
    std::string asset_checksum;
};

// Content fingerprint binding a bundle to its asset.
std::string asset_content_checksum(const Asset& asset);

// Inverts both stages (data -> noise) recording trajectories and attention
// K/V under the config's schedule and guidance.
InversionBundle make_inversion_bundle(const Asset& asset, const RunConfig& config);

// Two-stage masked edit. Coarse stage: invert the dense grid with K/V
// capture, denoise with per-step replacement outside the dilated mask,
// re-threshold occupancy. Sparse stage: derive the new active set, keep set =
// old active minus the dilated mask, normalize features, invert with capture,
// denoise with per-step row replacement (fresh seeded noise rows for newly
// activated coordinates), denormalize, and finally copy the input feature
// rows onto the keep set so preservation is bitwise. K/V replacement for the
// sparse stage is skipped (with a warning) when the active set changed, since
// cached entries are keyed to the old token layout.
// Requires matching coarse/sparse resolutions (identity coordinate mapping).
EditOutcome run_two_stage_edit(const Asset& asset, const BinaryMask3D& edit_mask,
                               const RunConfig& config);

// The denoising half only, against precomputed caches. The edit schedule
// comes from `config`; a bundle recorded under a different schedule (or for a
// different asset) surfaces as a cache error during replacement or injection.
EditOutcome run_two_stage_edit(const Asset& asset, const BinaryMask3D& edit_mask,
                               const RunConfig& config, const InversionBundle& bundle);

enum class ReconstructMode { full, st_only };

struct ReconstructReport {
    double st_rel_l2 = 0.0;    // dense grid values, relative L2
    double slat_rel_l2 = 0.0;  // sparse features, normalized space
    long field_evals = 0;
};

struct ReconstructOutcome {
    Asset asset;
    ReconstructReport report;
};

// Inversion-reconstruction fidelity probe: invert then sample each stage with
// no replacement and report per-stage relative L2 errors. `st_only` skips the
// sparse-stage inversion and samples it from fresh seeded noise instead,
// quantifying what the second inversion contributes. The returned asset has
// re-thresholded occupancy and the input's sparse coordinates; it is not
// validated (a poor reconstruction may break sparse/dense anchoring).
ReconstructOutcome reconstruct_asset(const Asset& asset, const RunConfig& config,
                                     ReconstructMode mode = ReconstructMode::full);

}  // namespace voxflow
