#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voxflow/fields.hpp"
#include "voxflow/kvstore.hpp"
#include "voxflow/lattice.hpp"
#include "voxflow/solver.hpp"

namespace voxflow {

// Per-edit switches. Defaults mirror the reference procedure: hard latent
// replacement on, binary dilated blend mask, KV replacement on, hard
// attention masking off.
struct EditOptions {
    bool latent_replacement = true;
    bool use_soft_mask = false;
    int dilation_radius = 2;
    double sigma = 1.5;
    bool use_kv_replacement = true;
    bool use_attention_mask = false;
    GuidanceConfig guidance;

    // Experimental override for the per-token KV weights (1 = edited).
    std::optional<std::vector<double>> token_weight_override;

    void validate() const;
};

// Everything edit_denoise needs to know about one stage's masked run. Build
// via make_st_context / make_slat_context; tests may assemble directly.
struct StageContext {
    Stage stage = Stage::st;

    // ST stage: grid geometry and blend masks.
    Dims3 dims;
    int channels = 0;
    SoftMask3D blend_weights;  // dilated binary (0/1) or soft edit mask

    // SLAT stage: state coordinates and the preserved set.
    std::vector<Coord3> coords;        // row per coordinate, canonical order
    std::vector<Coord3> cache_coords;  // coordinate list of the trajectory states
    CoordinateSet keep;                // preserved coordinates (subset of both)
    std::vector<double> keep_blend;    // per keep coord: weight of the *current*
                                       // value (0 = hard copy of cached); empty = all hard

    const TrajectoryCache* trajectory = nullptr;
    const KVCacheStore* kv = nullptr;          // optional
    std::vector<double> token_weights;         // per field token, 1 = edited
    std::vector<std::uint8_t> token_roles;     // per field token, 1 = edited

    // Starting state override (defaults to the trajectory terminal). The
    // pipeline uses it when the SLAT active set changed.
    std::optional<std::vector<double>> initial_state;
};

// z <- w (.) current + (1 - w) (.) cached, broadcasting the per-voxel weight
// across channels. Weights exactly 0 or 1 are bit copies.
void blend_st_latent(std::span<const double> current, std::span<const double> cached,
                     const SoftMask3D& weights, Dims3 dims, int channels, std::span<double> out);
DenseLatentGrid blend_st_latent(const DenseLatentGrid& current, const DenseLatentGrid& cached,
                                const BinaryMask3D& mask);
DenseLatentGrid blend_st_latent(const DenseLatentGrid& current, const DenseLatentGrid& cached,
                                const SoftMask3D& mask);

// Copies cached feature rows into `current` at every keep coordinate. Both
// sets may have different coordinate lists; a keep coordinate absent from
// either is an alignment (cache) error. Optional per-keep-coordinate blend
// weights w give w*current + (1-w)*cached instead of a hard copy.
SparseLatentSet copy_slat_preserved(const SparseLatentSet& current, const SparseLatentSet& cached,
                                    const CoordinateSet& keep,
                                    std::span<const double> blend_weights = {});

// Role vector (1 = edited) to hard attention mask. Also validates roles.
AttentionMask build_attention_mask(std::span<const std::uint8_t> roles);

struct EditResult {
    std::vector<double> final_state;
    std::vector<StepReport> reports;
    long total_field_evals = 0;
    std::vector<std::string> warnings;
};

// Masked denoising pass: starts from the trajectory's terminal-noise entry,
// samples down the schedule, and after every step overwrites preserved
// content with the trajectory entry at the step's destination time. KV
// injection arms after the first step (the cache holds evaluations for
// schedule endpoints below s_T only) and resolves keys by exact time.
EditResult edit_denoise(const StageContext& ctx, const VelocityField& field,
                        const Schedule& schedule, const EditOptions& options,
                        const ConditionInput& cond, const ConditionInput& neg);

}  // namespace voxflow
