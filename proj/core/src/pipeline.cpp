#include "voxflow/pipeline.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "voxflow/errors.hpp"
#include "voxflow/io.hpp"
#include "voxflow/rng.hpp"

namespace voxflow {

void NormStats::validate() const {
    if (mean.size() != stddev.size()) throw numeric_error("normalization stats size mismatch");
    if (mean.empty()) throw numeric_error("normalization stats are empty");
    for (std::size_t c = 0; c < mean.size(); ++c) {
        if (!std::isfinite(mean[c]) || !std::isfinite(stddev[c]) || stddev[c] <= 0.0) {
            throw numeric_error("normalization stats must be finite with positive stddev");
        }
    }
}

NormStats compute_norm_stats(const SparseLatentSet& slat) {
    slat.validate();
    if (slat.coords.empty()) throw numeric_error("cannot compute stats of an empty sparse set");
    const int ch = slat.channels;
    const std::size_t n = slat.coords.size();
    NormStats stats;
    stats.mean.assign(std::size_t(ch), 0.0);
    stats.stddev.assign(std::size_t(ch), 1.0);
    for (int c = 0; c < ch; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = slat.feats[i * std::size_t(ch) + std::size_t(c)];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        if (lo == hi) {
            // Constant channel: subtracting the exact value zeroes it out and
            // the stddev fallback keeps division well defined.
            stats.mean[std::size_t(c)] = lo;
            stats.stddev[std::size_t(c)] = 1.0;
            continue;
        }
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = slat.feats[i * std::size_t(ch) + std::size_t(c)] - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n));  // population
        stats.mean[std::size_t(c)] = mean;
        stats.stddev[std::size_t(c)] = sd > 0.0 ? sd : 1.0;
    }
    stats.validate();
    return stats;
}

namespace {

void check_stats_shape(const SparseLatentSet& slat, const NormStats& stats) {
    stats.validate();
    if (stats.mean.size() != std::size_t(slat.channels)) {
        throw numeric_error("normalization stats channel count does not match the sparse set");
    }
}

}  // namespace

SparseLatentSet normalize_features(const SparseLatentSet& slat, const NormStats& stats) {
    slat.validate();
    check_stats_shape(slat, stats);
    SparseLatentSet out = slat;
    const int ch = slat.channels;
    for (std::size_t i = 0; i < slat.coords.size(); ++i) {
        for (int c = 0; c < ch; ++c) {
            double& v = out.feats[i * std::size_t(ch) + std::size_t(c)];
            v = (v - stats.mean[std::size_t(c)]) / stats.stddev[std::size_t(c)];
        }
    }
    return out;
}

SparseLatentSet denormalize_features(const SparseLatentSet& slat, const NormStats& stats) {
    slat.validate();
    check_stats_shape(slat, stats);
    SparseLatentSet out = slat;
    const int ch = slat.channels;
    for (std::size_t i = 0; i < slat.coords.size(); ++i) {
        for (int c = 0; c < ch; ++c) {
            double& v = out.feats[i * std::size_t(ch) + std::size_t(c)];
            v = v * stats.stddev[std::size_t(c)] + stats.mean[std::size_t(c)];
        }
    }
    return out;
}

std::pair<SparseLatentSet, NormStats> normalize_features(const SparseLatentSet& slat) {
    NormStats stats = compute_norm_stats(slat);
    return {normalize_features(slat, stats), std::move(stats)};
}

const char* field_kind_name(FieldKind kind) {
    switch (kind) {
        case FieldKind::toy: return "toy";
        case FieldKind::constant: return "constant";
        case FieldKind::linear: return "linear";
        case FieldKind::time_poly: return "time-poly";
        case FieldKind::affine: return "affine";
    }
    throw numeric_error("invalid field kind");
}

FieldKind parse_field_kind(std::string_view name) {
    if (name == "toy") return FieldKind::toy;
    if (name == "constant") return FieldKind::constant;
    if (name == "linear") return FieldKind::linear;
    if (name == "time-poly" || name == "time_poly") return FieldKind::time_poly;
    if (name == "affine") return FieldKind::affine;
    throw usage_error("unknown field kind '" + std::string(name) +
                      "' (expected toy, constant, linear, time-poly, or affine)");
}

void FieldSpec::validate() const {
    if (kind == FieldKind::toy) arch.validate();
    if (!std::isfinite(constant)) throw numeric_error("constant field velocity must be finite");
    if (!std::isfinite(lambda)) throw numeric_error("linear field rate must be finite");
}

std::unique_ptr<VelocityField> make_stage_field(const FieldSpec& spec,
                                                const StageLatentShape& shape) {
    spec.validate();
    if (shape.grid_side <= 0 || shape.channels <= 0) {
        throw numeric_error("stage shape needs a positive grid side and channel count");
    }
    const std::size_t size = shape.state_size();
    switch (spec.kind) {
        case FieldKind::toy: {
            TokenLayout layout = shape.dense
                                     ? TokenLayout::dense_grid(shape.grid_side)
                                     : TokenLayout::sparse_set(shape.grid_side, shape.coords);
            return make_toy_transformer(spec.arch, shape.channels, std::move(layout),
                                        spec.weight_seed);
        }
        case FieldKind::constant:
            return make_constant_field(size, spec.constant);
        case FieldKind::linear:
            return make_linear_field(size, spec.lambda);
        case FieldKind::time_poly:
            return make_time_poly_field(size);
        case FieldKind::affine: {
            SeededRng rng(sub_seed(spec.weight_seed, "affine-field"));
            std::vector<double> diag(size), offset(size);
            for (double& d : diag) d = -(0.25 + 0.75 * rng.uniform());
            for (double& b : offset) b = 0.5 * rng.gaussian();
            return make_affine_field(std::move(diag), std::move(offset));
        }
    }
    throw numeric_error("invalid field kind");
}

ConditionInput make_condition(CondMode mode, const std::string& name, int width) {
    if (width < 0) throw usage_error("condition embedding width must be non-negative");
    if (width == 0) {
        // Conditionless field: carry only the branch tag.
        ConditionInput c;
        c.mode = mode;
        return c;
    }
    if (name.empty()) {
        ConditionInput c = ConditionInput::unconditional(width);
        c.mode = mode;  // keep the branch tag even with a zero embedding
        return c;
    }
    return ConditionInput::named(mode, name, width);
}

void RunConfig::validate() const {
    if (steps < 1) throw numeric_error("step count must be at least 1");
    if (!std::isfinite(schedule_exponent) || schedule_exponent <= 0.0) {
        throw numeric_error("schedule exponent must be positive");
    }
    guidance.validate();
    edit_options().validate();
    st_field.validate();
    slat_field.validate();
}

EditOptions RunConfig::edit_options() const {
    EditOptions o;
    o.latent_replacement = latent_replacement;
    o.use_soft_mask = use_soft_mask;
    o.dilation_radius = dilation_radius;
    o.sigma = sigma;
    o.use_kv_replacement = use_kv_replacement;
    o.use_attention_mask = use_attention_mask;
    o.guidance = guidance;
    return o;
}

Schedule RunConfig::make_run_schedule() const {
    return make_schedule(steps, schedule_kind, schedule_exponent);
}

namespace {

std::string values_checksum(std::span<const double> values) {
    return checksum_string(fnv1a64(values.data(), values.size() * sizeof(double)));
}

std::vector<double> grid_values_outside(const DenseLatentGrid& grid, const BinaryMask3D& mask) {
    std::vector<double> out;
    for (int x = 0; x < grid.dims.h; ++x) {
        for (int y = 0; y < grid.dims.w; ++y) {
            for (int z = 0; z < grid.dims.d; ++z) {
                if (mask.test(x, y, z)) continue;
                for (int c = 0; c < grid.channels; ++c) out.push_back(grid.at(x, y, z, c));
            }
        }
    }
    return out;
}

std::vector<double> keep_row_values(const SparseLatentSet& slat, const CoordinateSet& keep) {
    std::vector<double> out;
    out.reserve(keep.size() * std::size_t(slat.channels));
    for (const auto& c : keep.coords) {
        const auto row = slat.find_row(c);
        if (!row) throw numeric_error("keep coordinate missing from sparse set");
        for (double v : slat.row(*row)) out.push_back(v);
    }
    return out;
}

SoftMask3D binary_as_soft(const BinaryMask3D& mask) {
    SoftMask3D soft;
    soft.dims = mask.dims;
    soft.weights.assign(mask.dims.total(), 0.0);
    for (int x = 0; x < mask.dims.h; ++x) {
        for (int y = 0; y < mask.dims.w; ++y) {
            for (int z = 0; z < mask.dims.d; ++z) {
                if (mask.test(x, y, z)) soft.weights[soft.index(x, y, z)] = 1.0;
            }
        }
    }
    return soft;
}

void fill_token_maps(std::span<const Coord3> tokens, const SoftMask3D& blend,
                     const BinaryMask3D& working, std::vector<double>& weights,
                     std::vector<std::uint8_t>& roles) {
    weights.resize(tokens.size());
    roles.resize(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Coord3& c = tokens[i];
        weights[i] = blend.at(c[0], c[1], c[2]);
        roles[i] = working.test(c[0], c[1], c[2]) ? 1 : 0;
    }
}

void threshold_occupancy(DenseLatentGrid& grid) {
    for (int x = 0; x < grid.dims.h; ++x) {
        for (int y = 0; y < grid.dims.w; ++y) {
            for (int z = 0; z < grid.dims.d; ++z) {
                double& v = grid.values[grid.index(x, y, z, 0)];
                v = v > kOccupancyThreshold ? 1.0 : 0.0;
            }
        }
    }
}

double rel_l2(std::span<const double> value, std::span<const double> reference) {
    if (value.size() != reference.size()) throw numeric_error("relative L2 size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double d = value[i] - reference[i];
        num += d * d;
        den += reference[i] * reference[i];
    }
    const double abs_err = std::sqrt(num);
    return den == 0.0 ? abs_err : abs_err / std::sqrt(den);
}

std::vector<Coord3> dense_token_coords(int side) {
    std::vector<Coord3> coords;
    coords.reserve(std::size_t(side) * std::size_t(side) * std::size_t(side));
    for (int x = 0; x < side; ++x)
        for (int y = 0; y < side; ++y)
            for (int z = 0; z < side; ++z) coords.push_back({x, y, z});
    return coords;
}

void append_warnings(std::vector<std::string>& into, const char* prefix,
                     const std::vector<std::string>& from) {
    for (const auto& w : from) into.push_back(std::string(prefix) + w);
}

}  // namespace

std::string asset_content_checksum(const Asset& asset) {
    const std::uint64_t grid_hash =
        fnv1a64(asset.st_grid.values.data(), asset.st_grid.values.size() * sizeof(double));
    const std::uint64_t coord_hash =
        fnv1a64(asset.slat.coords.data(), asset.slat.coords.size() * sizeof(Coord3));
    const std::uint64_t feat_hash =
        fnv1a64(asset.slat.feats.data(), asset.slat.feats.size() * sizeof(double));
    return checksum_string(grid_hash) + "-" + checksum_string(coord_hash) + "-" +
           checksum_string(feat_hash);
}

InversionBundle make_inversion_bundle(const Asset& asset, const RunConfig& config) {
    asset.validate();
    config.validate();
    const int side = asset.st_grid.dims.h;
    const int c_st = asset.st_grid.channels;
    const int c_slat = asset.slat.channels;

    InversionBundle bundle;
    bundle.schedule = config.make_run_schedule();
    bundle.guidance = config.guidance;
    bundle.asset_checksum = asset_content_checksum(asset);

    auto st_field = make_stage_field(config.st_field, {side, c_st, true, {}});
    const bool st_toy = st_field->hook() != nullptr;
    const ConditionInput st_cond =
        make_condition(CondMode::conditional, config.cond_name, st_field->condition_width());
    const ConditionInput st_neg =
        make_condition(CondMode::negative, config.neg_name, st_field->condition_width());
    bundle.st_kv = KVCacheStore(Stage::st, st_toy ? dense_token_coords(side) : std::vector<Coord3>{});

    TraversalResult st_inv = invert(*st_field, bundle.schedule, asset.st_grid.values,
                                    config.guidance, st_cond, st_neg,
                                    st_toy ? &bundle.st_kv : nullptr);
    bundle.st_trajectory = std::move(st_inv.trajectory);
    bundle.st_field_evals = st_inv.total_field_evals;

    auto [norm_slat, stats] = normalize_features(asset.slat);
    bundle.stats = std::move(stats);

    auto slat_field = make_stage_field(
        config.slat_field, {asset.slat.resolution, c_slat, false, asset.slat.coords});
    const bool slat_toy = slat_field->hook() != nullptr;
    const ConditionInput slat_cond =
        make_condition(CondMode::conditional, config.cond_name, slat_field->condition_width());
    const ConditionInput slat_neg =
        make_condition(CondMode::negative, config.neg_name, slat_field->condition_width());
    bundle.slat_kv = KVCacheStore(Stage::slat, asset.slat.coords);

    TraversalResult slat_inv =
        invert(*slat_field, bundle.schedule, norm_slat.feats, config.guidance, slat_cond,
               slat_neg, slat_toy ? &bundle.slat_kv : nullptr);
    slat_inv.trajectory.stage = Stage::slat;
    bundle.slat_trajectory = std::move(slat_inv.trajectory);
    bundle.slat_field_evals = slat_inv.total_field_evals;
    return bundle;
}

EditOutcome run_two_stage_edit(const Asset& asset, const BinaryMask3D& edit_mask,
                               const RunConfig& config) {
    const InversionBundle bundle = make_inversion_bundle(asset, config);
    return run_two_stage_edit(asset, edit_mask, config, bundle);
}

EditOutcome run_two_stage_edit(const Asset& asset, const BinaryMask3D& edit_mask,
                               const RunConfig& config, const InversionBundle& bundle) {
    asset.validate();
    config.validate();
    edit_mask.validate();
    if (!(edit_mask.dims == asset.st_grid.dims)) {
        throw numeric_error("edit mask dimensions must match the coarse grid");
    }
    const int side = asset.st_grid.dims.h;
    if (asset.slat.resolution != side) {
        throw numeric_error(
            "two-stage edit requires equal coarse and sparse resolutions (identity mapping)");
    }
    if (bundle.asset_checksum != asset_content_checksum(asset)) {
        throw cache_error("inversion bundle was computed for a different asset");
    }

    const Schedule schedule = config.make_run_schedule();
    const EditOptions options = config.edit_options();
    EditOutcome out;
    RunReport& report = out.report;

    const BinaryMask3D working = dilate_mask(edit_mask, options.dilation_radius);
    const SoftMask3D blend = options.use_soft_mask
                                 ? soft_edit_mask(edit_mask, options.dilation_radius, options.sigma)
                                 : binary_as_soft(working);

    // ---- coarse stage: denoise with per-step replacement ----
    const int c_st = asset.st_grid.channels;
    if (bundle.st_trajectory.terminal().size() != asset.st_grid.values.size()) {
        throw cache_error("inversion bundle coarse trajectory does not match the asset");
    }
    auto st_field = make_stage_field(config.st_field, {side, c_st, true, {}});
    const bool st_toy = st_field->hook() != nullptr;
    const ConditionInput st_cond =
        make_condition(CondMode::conditional, config.cond_name, st_field->condition_width());
    const ConditionInput st_neg =
        make_condition(CondMode::negative, config.neg_name, st_field->condition_width());

    report.st_invert_evals = bundle.st_field_evals;
    report.st_kv_entries = bundle.st_kv.size();

    StageContext st_ctx;
    st_ctx.stage = Stage::st;
    st_ctx.dims = asset.st_grid.dims;
    st_ctx.channels = c_st;
    st_ctx.blend_weights = blend;
    st_ctx.trajectory = &bundle.st_trajectory;
    st_ctx.kv = st_toy && options.use_kv_replacement ? &bundle.st_kv : nullptr;
    if (st_toy) {
        fill_token_maps(dense_token_coords(side), blend, working, st_ctx.token_weights,
                        st_ctx.token_roles);
    }

    EditResult st_edit = edit_denoise(st_ctx, *st_field, schedule, options, st_cond, st_neg);
    report.st_edit_evals = st_edit.total_field_evals;
    append_warnings(report.warnings, "coarse: ", st_edit.warnings);

    out.asset.st_grid = DenseLatentGrid{asset.st_grid.dims, c_st, std::move(st_edit.final_state)};
    threshold_occupancy(out.asset.st_grid);

    // ---- active sets and the preserved coordinate set ----
    const std::vector<Coord3>& active_before = asset.slat.coords;
    std::vector<Coord3> active_after = occupied_coords(out.asset.st_grid);
    report.active_before = active_before.size();
    report.active_after = active_after.size();

    const CoordinateSet keep_all = keep_complement(active_before, working);
    CoordinateSet after_set;
    after_set.coords = active_after;  // canonical by construction
    CoordinateSet keep;
    for (const auto& c : keep_all.coords) {
        if (after_set.contains(c)) keep.coords.push_back(c);
    }
    if (keep.size() < keep_all.size()) {
        report.warnings.push_back(
            std::to_string(keep_all.size() - keep.size()) +
            " preserved coordinates lost occupancy during the coarse edit");
    }
    report.keep_count = keep.size();
    if (keep.empty()) {
        report.warnings.push_back("keep set is empty: the whole sparse stage regenerates");
    }

    // ---- sparse stage: denoise over the edited active set ----
    const int c_slat = asset.slat.channels;
    if (bundle.slat_trajectory.terminal().size() !=
        active_before.size() * std::size_t(c_slat)) {
        throw cache_error("inversion bundle sparse trajectory does not match the asset");
    }
    auto slat_field = make_stage_field(config.slat_field, {side, c_slat, false, active_after});
    const bool slat_toy = slat_field->hook() != nullptr;
    const ConditionInput slat_cond =
        make_condition(CondMode::conditional, config.cond_name, slat_field->condition_width());
    const ConditionInput slat_neg =
        make_condition(CondMode::negative, config.neg_name, slat_field->condition_width());

    const bool layout_unchanged = active_after == active_before;
    const bool slat_kv_used = slat_toy && options.use_kv_replacement && layout_unchanged;
    if (slat_toy && options.use_kv_replacement && !layout_unchanged) {
        report.warnings.push_back(
            "sparse-stage K/V replacement disabled: the edit changed the active set");
    }
    report.slat_invert_evals = bundle.slat_field_evals;
    report.slat_kv_entries = bundle.slat_kv.size();
    report.slat_kv_replacement_used = slat_kv_used;

    // Starting noise over the edited active set: inverted rows where the
    // coordinate survived, fresh seeded gaussians where it is new.
    const std::vector<double>& terminal = bundle.slat_trajectory.terminal();
    SeededRng fresh_rng(sub_seed(config.seed, "slat-new-noise"));
    std::vector<double> start;
    start.reserve(active_after.size() * std::size_t(c_slat));
    std::size_t new_count = 0;
    for (const auto& c : active_after) {
        if (const auto row = asset.slat.find_row(c)) {
            const std::size_t off = *row * std::size_t(c_slat);
            for (int ch = 0; ch < c_slat; ++ch) start.push_back(terminal[off + std::size_t(ch)]);
        } else {
            for (int ch = 0; ch < c_slat; ++ch) start.push_back(fresh_rng.gaussian());
            ++new_count;
        }
    }
    report.new_coords = new_count;

    StageContext slat_ctx;
    slat_ctx.stage = Stage::slat;
    slat_ctx.channels = c_slat;
    slat_ctx.coords = active_after;
    slat_ctx.cache_coords = active_before;
    slat_ctx.keep = keep;
    slat_ctx.trajectory = &bundle.slat_trajectory;
    slat_ctx.kv = slat_kv_used ? &bundle.slat_kv : nullptr;
    slat_ctx.initial_state = std::move(start);
    if (slat_toy) {
        fill_token_maps(active_after, blend, working, slat_ctx.token_weights,
                        slat_ctx.token_roles);
    }

    EditResult slat_edit =
        edit_denoise(slat_ctx, *slat_field, schedule, options, slat_cond, slat_neg);
    report.slat_edit_evals = slat_edit.total_field_evals;
    append_warnings(report.warnings, "sparse: ", slat_edit.warnings);

    SparseLatentSet edited_norm{side, c_slat, std::move(active_after),
                                std::move(slat_edit.final_state)};
    SparseLatentSet edited = denormalize_features(edited_norm, bundle.stats);
    // De-normalization is only 1-ulp exact; the keep rows get the input bits.
    out.asset.slat = copy_slat_preserved(edited, asset.slat, keep);
    out.asset.validate();

    report.preserved_grid_checksum_in =
        values_checksum(grid_values_outside(asset.st_grid, working));
    report.preserved_grid_checksum_out =
        values_checksum(grid_values_outside(out.asset.st_grid, working));
    report.keep_features_checksum_in = values_checksum(keep_row_values(asset.slat, keep));
    report.keep_features_checksum_out = values_checksum(keep_row_values(out.asset.slat, keep));
    return out;
}

ReconstructOutcome reconstruct_asset(const Asset& asset, const RunConfig& config,
                                     ReconstructMode mode) {
    asset.validate();
    config.validate();
    const Schedule schedule = config.make_run_schedule();
    ReconstructOutcome out;

    const int side = asset.st_grid.dims.h;
    auto st_field = make_stage_field(config.st_field, {side, asset.st_grid.channels, true, {}});
    const ConditionInput st_cond =
        make_condition(CondMode::conditional, config.cond_name, st_field->condition_width());
    const ConditionInput st_neg =
        make_condition(CondMode::negative, config.neg_name, st_field->condition_width());

    TraversalResult st_inv =
        invert(*st_field, schedule, asset.st_grid.values, config.guidance, st_cond, st_neg);
    TraversalResult st_rec =
        sample(*st_field, schedule, st_inv.final_state, config.guidance, st_cond, st_neg);
    out.report.st_rel_l2 = rel_l2(st_rec.final_state, asset.st_grid.values);
    out.report.field_evals = st_inv.total_field_evals + st_rec.total_field_evals;

    auto [norm_slat, stats] = normalize_features(asset.slat);
    auto slat_field = make_stage_field(
        config.slat_field, {asset.slat.resolution, asset.slat.channels, false, asset.slat.coords});
    const ConditionInput slat_cond =
        make_condition(CondMode::conditional, config.cond_name, slat_field->condition_width());
    const ConditionInput slat_neg =
        make_condition(CondMode::negative, config.neg_name, slat_field->condition_width());

    std::vector<double> slat_start;
    if (mode == ReconstructMode::full) {
        TraversalResult slat_inv = invert(*slat_field, schedule, norm_slat.feats, config.guidance,
                                          slat_cond, slat_neg);
        out.report.field_evals += slat_inv.total_field_evals;
        slat_start = std::move(slat_inv.final_state);
    } else {
        SeededRng rng(sub_seed(config.seed, "slat-fresh-noise"));
        slat_start.resize(norm_slat.feats.size());
        for (double& v : slat_start) v = rng.gaussian();
    }
    TraversalResult slat_rec =
        sample(*slat_field, schedule, slat_start, config.guidance, slat_cond, slat_neg);
    out.report.slat_rel_l2 = rel_l2(slat_rec.final_state, norm_slat.feats);
    out.report.field_evals += slat_rec.total_field_evals;

    out.asset.st_grid =
        DenseLatentGrid{asset.st_grid.dims, asset.st_grid.channels, std::move(st_rec.final_state)};
    threshold_occupancy(out.asset.st_grid);
    SparseLatentSet rec_norm{asset.slat.resolution, asset.slat.channels, asset.slat.coords,
                             std::move(slat_rec.final_state)};
    out.asset.slat = denormalize_features(rec_norm, stats);
    return out;
}

}  // namespace voxflow
