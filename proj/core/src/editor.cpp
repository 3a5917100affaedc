#include "voxflow/editor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace voxflow {

void EditOptions::validate() const {
    if (dilation_radius < 0) throw usage_error("dilation radius must be >= 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw usage_error("soft mask sigma must be > 0");
    guidance.validate();
    if (token_weight_override) {
        for (double w : *token_weight_override) {
            if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
                throw usage_error("token weight override outside [0,1]");
            }
        }
    }
}

void blend_st_latent(std::span<const double> current, std::span<const double> cached,
                     const SoftMask3D& weights, Dims3 dims, int channels, std::span<double> out) {
    const std::size_t voxels = dims.total();
    const std::size_t n = voxels * std::size_t(channels);
    if (current.size() != n || cached.size() != n || out.size() != n) {
        throw numeric_error("blend_st_latent: state sizes do not match dims*channels");
    }
    if (weights.dims != dims) throw numeric_error("blend_st_latent: mask dims do not match grid dims");
    for (int c = 0; c < channels; ++c) {
        const std::size_t base = voxels * std::size_t(c);
        for (std::size_t i = 0; i < voxels; ++i) {
            const double w = weights.weights[i];
            if (w == 1.0) {
                out[base + i] = current[base + i];  // exact selection, no arithmetic
            } else if (w == 0.0) {
                out[base + i] = cached[base + i];
            } else {
                out[base + i] = w * current[base + i] + (1.0 - w) * cached[base + i];
            }
        }
    }
}

namespace {

SoftMask3D mask_to_weights(const BinaryMask3D& mask) {
    mask.validate();
    SoftMask3D w;
    w.dims = mask.dims;
    w.weights.resize(mask.bits.size());
    for (std::size_t i = 0; i < mask.bits.size(); ++i) w.weights[i] = mask.bits[i] ? 1.0 : 0.0;
    return w;
}

}  // namespace

DenseLatentGrid blend_st_latent(const DenseLatentGrid& current, const DenseLatentGrid& cached,
                                const BinaryMask3D& mask) {
    return blend_st_latent(current, cached, mask_to_weights(mask));
}

DenseLatentGrid blend_st_latent(const DenseLatentGrid& current, const DenseLatentGrid& cached,
                                const SoftMask3D& mask) {
    if (current.dims != cached.dims || current.channels != cached.channels) {
        throw numeric_error("blend_st_latent: grids have different shape");
    }
    DenseLatentGrid out = DenseLatentGrid::zeros(current.dims, current.channels);
    blend_st_latent(current.values, cached.values, mask, current.dims, current.channels, out.values);
    return out;
}

SparseLatentSet copy_slat_preserved(const SparseLatentSet& current, const SparseLatentSet& cached,
                                    const CoordinateSet& keep, std::span<const double> blend_weights) {
    if (current.channels != cached.channels) {
        throw numeric_error("copy_slat_preserved: channel counts differ");
    }
    if (!blend_weights.empty() && blend_weights.size() != keep.size()) {
        throw numeric_error("copy_slat_preserved: blend weight count does not match keep set");
    }
    SparseLatentSet out = current;
    for (std::size_t i = 0; i < keep.coords.size(); ++i) {
        const Coord3& c = keep.coords[i];
        auto row_cur = out.find_row(c);
        auto row_cache = cached.find_row(c);
        if (!row_cur || !row_cache) {
            std::ostringstream os;
            os << "copy_slat_preserved: keep coordinate (" << c[0] << "," << c[1] << "," << c[2]
               << ") absent from " << (!row_cur ? "the current set" : "the cached set");
            throw cache_error(os.str());
        }
        auto dst = out.row(*row_cur);
        auto src = cached.row(*row_cache);
        const double w = blend_weights.empty() ? 0.0 : blend_weights[i];
        if (w == 0.0) {
            std::copy(src.begin(), src.end(), dst.begin());
        } else if (w == 1.0) {
            // current bits stay untouched
        } else if (w > 0.0 && w < 1.0) {
            for (int ch = 0; ch < out.channels; ++ch) dst[ch] = w * dst[ch] + (1.0 - w) * src[ch];
        } else {
            throw numeric_error("copy_slat_preserved: blend weight outside [0,1]");
        }
    }
    return out;
}

AttentionMask build_attention_mask(std::span<const std::uint8_t> roles) {
    if (roles.empty()) throw usage_error("attention mask needs at least one token role");
    AttentionMask m;
    m.roles.assign(roles.begin(), roles.end());
    for (auto r : m.roles) {
        if (r > 1) throw usage_error("token roles must be 0 (preserved) or 1 (edited)");
    }
    return m;
}

namespace {

// Arms the hard attention mask up front and KV injection on demand; disarms
// everything on scope exit (exceptions included).
class HookGuard {
public:
    HookGuard(const VelocityField& field, const StageContext& ctx, bool want_mask)
        : hook_(field.hook()) {
        if (!hook_) return;
        if (hook_->mode != HookMode::off || hook_->attn_mask) {
            throw cache_error("attention hook already armed; edit pass requires exclusive access");
        }
        hook_->tag.stage = ctx.stage;
        if (want_mask) hook_->attn_mask = build_attention_mask(ctx.token_roles);
    }
    ~HookGuard() {
        if (hook_) {
            hook_->disarm();
            hook_->attn_mask.reset();
        }
    }
    void arm_injection(const StageContext& ctx) {
        if (!hook_ || armed_) return;
        hook_->mode = HookMode::inject;
        hook_->source = ctx.kv;
        hook_->token_weights = ctx.token_weights;
        armed_ = true;
    }
    HookGuard(const HookGuard&) = delete;
    HookGuard& operator=(const HookGuard&) = delete;

private:
    AttentionHook* hook_ = nullptr;
    bool armed_ = false;
};

// Row map for SLAT replacement: keep coordinate i -> (state row, cache row).
struct KeepRows {
    std::vector<std::size_t> state_row;
    std::vector<std::size_t> cache_row;
};

KeepRows build_keep_rows(const StageContext& ctx) {
    KeepRows rows;
    rows.state_row.reserve(ctx.keep.size());
    rows.cache_row.reserve(ctx.keep.size());
    for (const Coord3& c : ctx.keep.coords) {
        auto in_state = std::lower_bound(ctx.coords.begin(), ctx.coords.end(), c);
        auto in_cache = std::lower_bound(ctx.cache_coords.begin(), ctx.cache_coords.end(), c);
        const bool miss_state = in_state == ctx.coords.end() || *in_state != c;
        const bool miss_cache = in_cache == ctx.cache_coords.end() || *in_cache != c;
        if (miss_state || miss_cache) {
            std::ostringstream os;
            os << "edit_denoise: keep coordinate (" << c[0] << "," << c[1] << "," << c[2]
               << ") absent from " << (miss_state ? "the edit state" : "the trajectory cache");
            throw cache_error(os.str());
        }
        rows.state_row.push_back(std::size_t(in_state - ctx.coords.begin()));
        rows.cache_row.push_back(std::size_t(in_cache - ctx.cache_coords.begin()));
    }
    return rows;
}

}  // namespace

EditResult edit_denoise(const StageContext& ctx, const VelocityField& field,
                        const Schedule& schedule, const EditOptions& options,
                        const ConditionInput& cond, const ConditionInput& neg) {
    options.validate();
    schedule.validate();
    if (!ctx.trajectory) throw usage_error("edit_denoise: stage context has no trajectory cache");

    EditResult result;

    // Degenerate preserved sets are a warning, not an error: replacement
    // simply has nothing to do and the pass is free generation.
    const bool st = ctx.stage == Stage::st;
    if (options.latent_replacement) {
        if (st) {
            bool any_preserved = false;
            for (double w : ctx.blend_weights.weights) {
                if (w != 1.0) {
                    any_preserved = true;
                    break;
                }
            }
            if (!any_preserved) {
                result.warnings.push_back("edit region covers the whole grid; running free generation");
            }
        } else if (ctx.keep.empty()) {
            result.warnings.push_back("empty preserved set; running free generation");
        }
    }

    KeepRows keep_rows;
    if (!st && options.latent_replacement) keep_rows = build_keep_rows(ctx);

    const bool want_kv = options.use_kv_replacement && ctx.kv != nullptr && field.hook() != nullptr;
    HookGuard guard(field, ctx, options.use_attention_mask && field.hook() != nullptr);

    const std::vector<double>& start =
        ctx.initial_state ? *ctx.initial_state : ctx.trajectory->terminal();
    if (start.size() != field.state_size()) {
        throw numeric_error("edit_denoise: starting state size does not match the field");
    }

    const int channels = ctx.channels;
    auto callback = [&](int k, std::vector<double>& state) {
        if (options.latent_replacement) {
            const std::vector<double>& cached = ctx.trajectory->state_at_time(schedule.times[std::size_t(k)]);
            if (st) {
                std::vector<double> blended(state.size());
                blend_st_latent(state, cached, ctx.blend_weights, ctx.dims, channels, blended);
                state = std::move(blended);
            } else {
                if (cached.size() != ctx.cache_coords.size() * std::size_t(channels)) {
                    throw cache_error("edit_denoise: trajectory state size does not match its coordinates");
                }
                for (std::size_t i = 0; i < keep_rows.state_row.size(); ++i) {
                    double* dst = state.data() + keep_rows.state_row[i] * std::size_t(channels);
                    const double* src = cached.data() + keep_rows.cache_row[i] * std::size_t(channels);
                    const double w = ctx.keep_blend.empty() ? 0.0 : ctx.keep_blend[i];
                    if (w == 0.0) {
                        std::copy(src, src + channels, dst);
                    } else if (w != 1.0) {
                        for (int ch = 0; ch < channels; ++ch) {
                            dst[ch] = w * dst[ch] + (1.0 - w) * src[ch];
                        }
                    }
                }
            }
        }
        // KV injection applies from the *next* step on: the cache holds
        // evaluations at schedule endpoints strictly below s_T, so the first
        // step (from s_T) must run uninjected.
        if (want_kv && k > 0) guard.arm_injection(ctx);
    };

    TraversalResult run = sample(field, schedule, start, options.guidance, cond, neg, callback);
    result.final_state = std::move(run.final_state);
    result.reports = std::move(run.reports);
    result.total_field_evals = run.total_field_evals;
    return result;
}

}  // namespace voxflow
