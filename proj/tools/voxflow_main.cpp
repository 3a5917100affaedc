#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voxflow/config.hpp"
#include "voxflow/errors.hpp"
#include "voxflow/io.hpp"
#include "voxflow/metrics.hpp"
#include "voxflow/persist.hpp"
#include "voxflow/pipeline.hpp"
#include "voxflow/rng.hpp"
#include "voxflow/solver.hpp"
#include "voxflow/synth.hpp"

namespace fs = std::filesystem;
using namespace voxflow;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void print_kv(const std::map<std::string, std::string>& rows) {
    for (const auto& [k, v] : rows) std::printf("%s = %s\n", k.c_str(), v.c_str());
}

// Config layering shared by every verb: built-in defaults, VOXFLOW_SEED,
// optional --config file, then --set overrides and the convenience flags.
struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> sets;
    int steps = 0;
    std::uint64_t seed = 0;
    double omega = 0.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--set", sets, "config override key=value (repeatable)");
        cmd->add_option("--steps", steps, "override the denoising step count");
        cmd->add_option("--seed", seed, "override the run seed");
        cmd->add_option("--omega", omega, "override the guidance strength");
        owner = cmd;
    }

    Settings resolve() const {
        std::vector<std::string> overrides = sets;
        if (owner->count("--steps")) overrides.push_back("steps=" + std::to_string(steps));
        if (owner->count("--seed")) overrides.push_back("seed=" + std::to_string(seed));
        if (owner->count("--omega")) overrides.push_back("guidance_omega=" + fmt_double(omega));
        std::optional<fs::path> file;
        if (!config_path.empty()) file = config_path;
        return resolve_settings(merge_config(file, overrides));
    }

private:
    CLI::App* owner = nullptr;
};

std::map<std::string, std::string> asset_artifacts(const fs::path& out, const fs::path& rel_dir) {
    std::map<std::string, std::string> artifacts;
    for (const char* name : {"st.vxg", "slat.vxs"}) {
        const fs::path rel = rel_dir / name;
        artifacts[rel.generic_string()] = file_checksum(out / rel);
    }
    return artifacts;
}

int run_gen(const fs::path& out, const Settings& s) {
    Asset asset = gen_asset(s.shape, s.n_st, s.n_slat, s.c_slat);
    ScenarioReport scenario;
    BinaryMask3D mask = gen_edit_scenario(asset, s.region, &scenario);

    save_asset(out / "asset", asset);
    write_mask_vxg(out / "mask.vxg", mask);

    auto artifacts = asset_artifacts(out, "asset");
    artifacts["mask.vxg"] = file_checksum(out / "mask.vxg");
    std::map<std::string, std::string> extras{
        {"asset_checksum", asset_content_checksum(asset)},
        {"active_voxels", std::to_string(asset.slat.coords.size())},
        {"mask_count", std::to_string(scenario.mask_count)},
        {"mask_active_overlap", std::to_string(scenario.mask_active_overlap)},
        {"keep_count", std::to_string(scenario.keep_count)},
        {"empty_region", scenario.empty_region ? "true" : "false"},
    };
    write_run_manifest(out / "run.json", "gen", s.resolved, artifacts, extras);
    print_kv(extras);
    return 0;
}

int run_invert(const fs::path& in, const fs::path& out, const Settings& s) {
    const Asset asset = load_asset(in);
    const InversionBundle bundle = make_inversion_bundle(asset, s.run);
    save_inversion_bundle(out / "inversion", bundle);

    std::map<std::string, std::string> artifacts;
    for (const char* rel : {"inversion/manifest.json", "inversion/st_trajectory/manifest.json",
                            "inversion/slat_trajectory/manifest.json"}) {
        artifacts[rel] = file_checksum(out / rel);
    }
    std::map<std::string, std::string> extras{
        {"asset_checksum", bundle.asset_checksum},
        {"st_field_evals", std::to_string(bundle.st_field_evals)},
        {"slat_field_evals", std::to_string(bundle.slat_field_evals)},
        {"st_kv_entries", std::to_string(bundle.st_kv.size())},
        {"slat_kv_entries", std::to_string(bundle.slat_kv.size())},
    };
    write_run_manifest(out / "run.json", "invert", s.resolved, artifacts, extras);
    print_kv(extras);
    return 0;
}

int run_edit(const fs::path& in, const fs::path& mask_path, const fs::path& out,
             const std::string& inversion_dir, const Settings& s) {
    const Asset asset = load_asset(in);
    const BinaryMask3D mask = read_mask_vxg(mask_path);

    EditOutcome outcome;
    if (!inversion_dir.empty()) {
        const InversionBundle bundle = load_inversion_bundle(inversion_dir);
        outcome = run_two_stage_edit(asset, mask, s.run, bundle);
    } else {
        outcome = run_two_stage_edit(asset, mask, s.run);
    }
    save_asset(out / "asset", outcome.asset);

    const RunReport& r = outcome.report;
    std::map<std::string, std::string> extras{
        {"input_checksum", asset_content_checksum(asset)},
        {"output_checksum", asset_content_checksum(outcome.asset)},
        {"st_invert_evals", std::to_string(r.st_invert_evals)},
        {"st_edit_evals", std::to_string(r.st_edit_evals)},
        {"slat_invert_evals", std::to_string(r.slat_invert_evals)},
        {"slat_edit_evals", std::to_string(r.slat_edit_evals)},
        {"st_kv_entries", std::to_string(r.st_kv_entries)},
        {"slat_kv_entries", std::to_string(r.slat_kv_entries)},
        {"active_before", std::to_string(r.active_before)},
        {"active_after", std::to_string(r.active_after)},
        {"keep_count", std::to_string(r.keep_count)},
        {"new_coords", std::to_string(r.new_coords)},
        {"slat_kv_replacement_used", r.slat_kv_replacement_used ? "true" : "false"},
        {"preserved_grid_checksum_in", r.preserved_grid_checksum_in},
        {"preserved_grid_checksum_out", r.preserved_grid_checksum_out},
        {"keep_features_checksum_in", r.keep_features_checksum_in},
        {"keep_features_checksum_out", r.keep_features_checksum_out},
    };
    if (!r.warnings.empty()) {
        std::string joined;
        for (const auto& w : r.warnings) {
            if (!joined.empty()) joined += "; ";
            joined += w;
        }
        extras["warnings"] = joined;
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    }
    write_run_manifest(out / "run.json", "edit", s.resolved, asset_artifacts(out, "asset"),
                       extras);
    print_kv(extras);
    return 0;
}

int run_reconstruct(const fs::path& in, const fs::path& out, bool st_only, const Settings& s) {
    const Asset asset = load_asset(in);
    const ReconstructOutcome outcome = reconstruct_asset(
        asset, s.run, st_only ? ReconstructMode::st_only : ReconstructMode::full);
    save_asset(out / "asset", outcome.asset);

    std::map<std::string, std::string> extras{
        {"st_rel_l2", fmt_double(outcome.report.st_rel_l2)},
        {"slat_rel_l2", fmt_double(outcome.report.slat_rel_l2)},
        {"field_evals", std::to_string(outcome.report.field_evals)},
    };
    write_run_manifest(out / "run.json", "reconstruct", s.resolved,
                       asset_artifacts(out, "asset"), extras);
    print_kv(extras);
    return 0;
}

int run_bench_order(const fs::path& out, const std::string& kind_name, int size, double lambda,
                    double constant, std::vector<int> step_counts, const Settings& s) {
    if (size < 1) throw usage_error("--size must be at least 1");
    if (step_counts.empty()) throw usage_error("--steps-list needs at least one step count");

    std::unique_ptr<VelocityField> field;
    const FieldKind kind = parse_field_kind(kind_name);
    const std::size_t n = std::size_t(size);
    switch (kind) {
        case FieldKind::linear: field = make_linear_field(n, lambda); break;
        case FieldKind::time_poly: field = make_time_poly_field(n); break;
        case FieldKind::constant: field = make_constant_field(n, constant); break;
        case FieldKind::affine: {
            FieldSpec spec;
            spec.kind = FieldKind::affine;
            spec.weight_seed = s.run.st_field.weight_seed;
            field = make_stage_field(spec, {size, 1, true, {}});
            break;
        }
        case FieldKind::toy:
            throw usage_error("field kind 'toy' has no closed-form flow to benchmark against");
    }

    SeededRng rng(sub_seed(s.run.seed, "bench-state"));
    std::vector<double> x_at_one(field->state_size());
    for (double& v : x_at_one) v = rng.gaussian();

    const ConvergenceReport taylor =
        convergence_probe(*field, step_counts, StepMethod::taylor, x_at_one);
    const ConvergenceReport euler =
        convergence_probe(*field, step_counts, StepMethod::euler, x_at_one);

    std::map<std::string, std::string> extras{{"field", kind_name},
                                              {"size", std::to_string(size)}};
    for (std::size_t i = 0; i < taylor.step_counts.size(); ++i) {
        std::printf("T = %-4d taylor_err = %-24.17g euler_err = %.17g\n", taylor.step_counts[i],
                    taylor.errors[i], euler.errors[i]);
        const std::string t = std::to_string(taylor.step_counts[i]);
        extras["taylor_err_" + t] = fmt_double(taylor.errors[i]);
        extras["euler_err_" + t] = fmt_double(euler.errors[i]);
    }
    const std::string taylor_slope = taylor.exact ? "exact" : fmt_double(taylor.slope);
    const std::string euler_slope = euler.exact ? "exact" : fmt_double(euler.slope);
    std::printf("taylor_slope = %s\n", taylor_slope.c_str());
    std::printf("euler_slope = %s\n", euler_slope.c_str());
    extras["taylor_slope"] = taylor_slope;
    extras["euler_slope"] = euler_slope;

    write_run_manifest(out / "run.json", "bench-order", s.resolved, {}, extras);
    return 0;
}

int run_metrics(const fs::path& in, const fs::path& ref, const std::string& mask_path,
                const fs::path& out, const Settings& s) {
    const Asset a = load_asset(in);
    const Asset b = load_asset(ref);
    if (!(a.st_grid.dims == b.st_grid.dims) || a.slat.resolution != b.slat.resolution) {
        throw numeric_error("metrics: assets have different lattice shapes");
    }

    BinaryMask3D working = BinaryMask3D::zeros(a.st_grid.dims);
    if (!mask_path.empty()) {
        const BinaryMask3D mask = read_mask_vxg(mask_path);
        if (!(mask.dims == a.st_grid.dims)) {
            throw numeric_error("metrics: mask dimensions do not match the assets");
        }
        working = dilate_mask(mask, s.run.dilation_radius);
    }

    const CoordinateSet keep_a = keep_complement(a.slat.coords, working);
    const CoordinateSet keep_b = keep_complement(b.slat.coords, working);
    const double cd = chamfer(pointset_from_coords(keep_a.coords, a.slat.resolution),
                              pointset_from_coords(keep_b.coords, b.slat.resolution));

    std::map<std::string, std::string> values{{"chamfer", fmt_double(cd)}};
    double worst_psnr = std::numeric_limits<double>::infinity();
    double worst_ssim = std::numeric_limits<double>::infinity();
    const char* axis_names[] = {"x", "y", "z"};
    for (Axis axis : {Axis::x, Axis::y, Axis::z}) {
        const Projection2D pa = project_ortho(a.st_grid, axis);
        const Projection2D pb = project_ortho(b.st_grid, axis);
        const auto pixels = preserved_pixel_mask(working, axis);
        const double psnr = masked_psnr(pa, pb, pixels);
        const double ssim = masked_ssim(pa, pb, pixels);
        values[std::string("psnr_") + axis_names[axis_index(axis)]] = fmt_double(psnr);
        values[std::string("ssim_") + axis_names[axis_index(axis)]] = fmt_double(ssim);
        worst_psnr = std::min(worst_psnr, psnr);
        worst_ssim = std::min(worst_ssim, ssim);
    }
    values["masked_psnr"] = fmt_double(worst_psnr);
    values["masked_ssim"] = fmt_double(worst_ssim);

    write_run_manifest(out / "run.json", "metrics", s.resolved, {}, values);
    print_kv(values);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxflow: two-stage voxel latent editing with flow inversion"};
    app.require_subcommand(1);

    std::string in_dir, ref_dir, out_dir, mask_file, inversion_dir;
    bool st_only = false;
    std::string bench_field = "linear";
    int bench_size = 64;
    double bench_lambda = 1.0;
    double bench_constant = 0.25;
    std::vector<int> bench_steps{8, 16, 32, 64};

    ConfigArgs gen_cfg, invert_cfg, edit_cfg, recon_cfg, bench_cfg, metrics_cfg;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic asset and edit mask");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen_cfg.attach(gen);

    CLI::App* invert = app.add_subcommand("invert", "invert an asset and save the caches");
    invert->add_option("--in", in_dir, "asset directory")->required();
    invert->add_option("--out", out_dir, "output directory")->required();
    invert_cfg.attach(invert);

    CLI::App* edit = app.add_subcommand("edit", "mask-guided two-stage edit");
    edit->add_option("--in", in_dir, "asset directory")->required();
    edit->add_option("--mask", mask_file, "edit mask (.vxg, C=1, values 0/1)")->required();
    edit->add_option("--out", out_dir, "output directory")->required();
    edit->add_option("--inversion", inversion_dir, "precomputed inversion bundle directory");
    edit_cfg.attach(edit);

    CLI::App* recon = app.add_subcommand("reconstruct", "invert + resample, report errors");
    recon->add_option("--in", in_dir, "asset directory")->required();
    recon->add_option("--out", out_dir, "output directory")->required();
    recon->add_flag("--st-only", st_only, "resample the sparse stage from fresh noise");
    recon_cfg.attach(recon);

    CLI::App* bench = app.add_subcommand("bench-order", "solver convergence-order study");
    bench->add_option("--out", out_dir, "output directory")->required();
    bench->add_option("--field", bench_field, "analytic field kind (linear, time-poly, affine, constant)");
    bench->add_option("--size", bench_size, "state size");
    bench->add_option("--lambda", bench_lambda, "linear field rate");
    bench->add_option("--constant", bench_constant, "constant field velocity");
    bench->add_option("--steps-list", bench_steps, "step counts to probe");
    bench_cfg.attach(bench);

    CLI::App* metrics = app.add_subcommand("metrics", "compare two assets");
    metrics->add_option("--in", in_dir, "asset directory under test")->required();
    metrics->add_option("--ref", ref_dir, "reference asset directory")->required();
    metrics->add_option("--mask", mask_file, "edit mask; metrics cover its complement");
    metrics->add_option("--out", out_dir, "output directory")->required();
    metrics_cfg.attach(metrics);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);
        return 2;
    }

    try {
        std::filesystem::create_directories(out_dir);
        if (*gen) return run_gen(out_dir, gen_cfg.resolve());
        if (*invert) return run_invert(in_dir, out_dir, invert_cfg.resolve());
        if (*edit) return run_edit(in_dir, mask_file, out_dir, inversion_dir, edit_cfg.resolve());
        if (*recon) return run_reconstruct(in_dir, out_dir, st_only, recon_cfg.resolve());
        if (*bench) {
            return run_bench_order(out_dir, bench_field, bench_size, bench_lambda, bench_constant,
                                   bench_steps, bench_cfg.resolve());
        }
        if (*metrics) return run_metrics(in_dir, ref_dir, mask_file, out_dir, metrics_cfg.resolve());
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
