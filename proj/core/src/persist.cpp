#include "voxflow/persist.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "json.hpp"
#include "voxflow/errors.hpp"
#include "voxflow/io.hpp"
#include "voxflow/rng.hpp"

namespace voxflow {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path.string() + " for reading");
    try {
        return ordered_json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
    if (!os) throw io_error("failed writing " + path.string());
}

void check_format(const ordered_json& j, const std::filesystem::path& path, const char* expect) {
    if (!j.contains("format") || j["format"] != expect) {
        throw io_error(path.string() + ": expected format '" + expect + "'");
    }
}

void verify_checksum(const std::filesystem::path& file, const std::string& expect) {
    const std::string got = file_checksum(file);
    if (got != expect) {
        throw io_error(file.string() + ": checksum mismatch (manifest " + expect + ", file " +
                       got + ")");
    }
}

Stage parse_stage(const std::string& name, const std::filesystem::path& path) {
    if (name == "st") return Stage::st;
    if (name == "slat") return Stage::slat;
    throw io_error(path.string() + ": unknown stage '" + name + "'");
}

void write_f64_file(const std::filesystem::path& path, std::span<const double> values) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(values.data()),
             std::streamsize(values.size() * sizeof(double)));
    if (!os) throw io_error("failed writing " + path.string());
}

std::vector<double> read_f64_file(const std::filesystem::path& path, std::size_t count) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string() + " for reading");
    std::vector<double> values(count);
    is.read(reinterpret_cast<char*>(values.data()), std::streamsize(count * sizeof(double)));
    if (std::size_t(is.gcount()) != count * sizeof(double)) {
        throw io_error(path.string() + ": truncated state file");
    }
    char extra;
    if (is.read(&extra, 1)) throw io_error(path.string() + ": trailing bytes in state file");
    for (double v : values) {
        if (std::isnan(v)) throw io_error(path.string() + ": state file holds NaN");
    }
    return values;
}

std::string state_filename(std::size_t k) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "t_%04zu.f64", k);
    return buf;
}

ordered_json hexfloat_array(std::span<const double> values) {
    ordered_json arr = ordered_json::array();
    for (double v : values) arr.push_back(double_to_hex(v));
    return arr;
}

std::vector<double> parse_hexfloat_array(const ordered_json& arr,
                                         const std::filesystem::path& path) {
    if (!arr.is_array()) throw io_error(path.string() + ": expected an array of hexfloats");
    std::vector<double> values;
    values.reserve(arr.size());
    for (const auto& v : arr) values.push_back(hex_to_double(v.get<std::string>()));
    return values;
}

}  // namespace

void save_asset(const std::filesystem::path& dir, const Asset& asset) {
    asset.validate();
    std::filesystem::create_directories(dir);
    write_vxg(dir / "st.vxg", asset.st_grid);
    write_vxs(dir / "slat.vxs", asset.slat);
    ordered_json meta;
    meta["format"] = "voxflow-asset/1";
    meta["st"] = {{"file", "st.vxg"}, {"checksum", file_checksum(dir / "st.vxg")}};
    meta["slat"] = {{"file", "slat.vxs"}, {"checksum", file_checksum(dir / "slat.vxs")}};
    write_json(dir / "meta.json", meta);
}

Asset load_asset(const std::filesystem::path& dir) {
    const ordered_json meta = read_json(dir / "meta.json");
    check_format(meta, dir / "meta.json", "voxflow-asset/1");
    const auto st_file = dir / meta["st"]["file"].get<std::string>();
    const auto slat_file = dir / meta["slat"]["file"].get<std::string>();
    verify_checksum(st_file, meta["st"]["checksum"].get<std::string>());
    verify_checksum(slat_file, meta["slat"]["checksum"].get<std::string>());
    Asset asset{read_vxg(st_file), read_vxs(slat_file)};
    asset.validate();
    return asset;
}

void save_trajectory(const std::filesystem::path& dir, const TrajectoryCache& trajectory) {
    if (trajectory.times.size() != trajectory.states.size()) {
        throw numeric_error("trajectory has mismatched times and states");
    }
    std::filesystem::create_directories(dir);
    ordered_json files = ordered_json::array();
    for (std::size_t k = 0; k < trajectory.states.size(); ++k) {
        const std::string name = state_filename(k);
        write_f64_file(dir / name, trajectory.states[k]);
        files.push_back({{"file", name}, {"checksum", file_checksum(dir / name)}});
    }
    ordered_json manifest;
    manifest["format"] = "voxflow-trajectory/1";
    manifest["stage"] = stage_name(trajectory.stage);
    manifest["state_size"] =
        trajectory.states.empty() ? std::size_t(0) : trajectory.states.front().size();
    manifest["times"] = hexfloat_array(trajectory.times);
    manifest["files"] = files;
    write_json(dir / "manifest.json", manifest);
}

TrajectoryCache load_trajectory(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    const ordered_json manifest = read_json(manifest_path);
    check_format(manifest, manifest_path, "voxflow-trajectory/1");
    TrajectoryCache trajectory;
    trajectory.stage = parse_stage(manifest["stage"].get<std::string>(), manifest_path);
    trajectory.times = parse_hexfloat_array(manifest["times"], manifest_path);
    const std::size_t state_size = manifest["state_size"].get<std::size_t>();
    const auto& files = manifest["files"];
    if (!files.is_array() || files.size() != trajectory.times.size()) {
        throw io_error(manifest_path.string() + ": file list does not match the time list");
    }
    trajectory.states.reserve(files.size());
    for (const auto& entry : files) {
        const auto file = dir / entry["file"].get<std::string>();
        verify_checksum(file, entry["checksum"].get<std::string>());
        trajectory.states.push_back(read_f64_file(file, state_size));
    }
    return trajectory;
}

void save_inversion_bundle(const std::filesystem::path& dir, const InversionBundle& bundle) {
    std::filesystem::create_directories(dir);
    save_trajectory(dir / "st_trajectory", bundle.st_trajectory);
    save_trajectory(dir / "slat_trajectory", bundle.slat_trajectory);
    if (bundle.st_kv.size() > 0) bundle.st_kv.spill(dir / "st_kv");
    if (bundle.slat_kv.size() > 0) bundle.slat_kv.spill(dir / "slat_kv");

    ordered_json manifest;
    manifest["format"] = "voxflow-inversion/1";
    manifest["schedule"] = {
        {"kind", bundle.schedule.kind == Schedule::Kind::uniform ? "uniform" : "shifted"},
        {"exponent", double_to_hex(bundle.schedule.exponent)},
        {"times", hexfloat_array(bundle.schedule.times)},
    };
    manifest["guidance"] = {
        {"omega", double_to_hex(bundle.guidance.omega)},
        {"lo", double_to_hex(bundle.guidance.lo)},
        {"hi", double_to_hex(bundle.guidance.hi)},
    };
    manifest["stats"] = {
        {"mean", hexfloat_array(bundle.stats.mean)},
        {"stddev", hexfloat_array(bundle.stats.stddev)},
    };
    manifest["st_field_evals"] = bundle.st_field_evals;
    manifest["slat_field_evals"] = bundle.slat_field_evals;
    manifest["asset_checksum"] = bundle.asset_checksum;
    manifest["st_kv"] = bundle.st_kv.size() > 0;
    manifest["slat_kv"] = bundle.slat_kv.size() > 0;
    write_json(dir / "manifest.json", manifest);
}

InversionBundle load_inversion_bundle(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    const ordered_json manifest = read_json(manifest_path);
    check_format(manifest, manifest_path, "voxflow-inversion/1");

    InversionBundle bundle;
    const auto& sched = manifest["schedule"];
    const std::string kind = sched["kind"].get<std::string>();
    if (kind == "uniform") {
        bundle.schedule.kind = Schedule::Kind::uniform;
    } else if (kind == "shifted") {
        bundle.schedule.kind = Schedule::Kind::shifted;
    } else {
        throw io_error(manifest_path.string() + ": unknown schedule kind '" + kind + "'");
    }
    bundle.schedule.exponent = hex_to_double(sched["exponent"].get<std::string>());
    bundle.schedule.times = parse_hexfloat_array(sched["times"], manifest_path);
    bundle.schedule.validate();

    const auto& guid = manifest["guidance"];
    bundle.guidance.omega = hex_to_double(guid["omega"].get<std::string>());
    bundle.guidance.lo = hex_to_double(guid["lo"].get<std::string>());
    bundle.guidance.hi = hex_to_double(guid["hi"].get<std::string>());
    bundle.guidance.validate();

    bundle.stats.mean = parse_hexfloat_array(manifest["stats"]["mean"], manifest_path);
    bundle.stats.stddev = parse_hexfloat_array(manifest["stats"]["stddev"], manifest_path);
    bundle.stats.validate();

    bundle.st_field_evals = manifest["st_field_evals"].get<long>();
    bundle.slat_field_evals = manifest["slat_field_evals"].get<long>();
    bundle.asset_checksum = manifest["asset_checksum"].get<std::string>();

    bundle.st_trajectory = load_trajectory(dir / "st_trajectory");
    bundle.slat_trajectory = load_trajectory(dir / "slat_trajectory");
    for (const TrajectoryCache* t : {&bundle.st_trajectory, &bundle.slat_trajectory}) {
        if (t->times != bundle.schedule.times) {
            throw io_error(manifest_path.string() +
                           ": trajectory times disagree with the bundle schedule");
        }
    }
    bundle.st_kv = manifest["st_kv"].get<bool>() ? KVCacheStore::load(dir / "st_kv")
                                                 : KVCacheStore(Stage::st, {});
    bundle.slat_kv = manifest["slat_kv"].get<bool>() ? KVCacheStore::load(dir / "slat_kv")
                                                     : KVCacheStore(Stage::slat, {});
    return bundle;
}

void write_run_manifest(const std::filesystem::path& file, const std::string& verb,
                        const std::map<std::string, std::string>& resolved,
                        const std::map<std::string, std::string>& artifacts,
                        const std::map<std::string, std::string>& extras) {
    ordered_json manifest;
    manifest["format"] = "voxflow-run/1";
    manifest["verb"] = verb;
    char stamp[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    manifest["timestamp"] = stamp;
    manifest["config"] = ordered_json(resolved);      // std::map iterates sorted
    manifest["artifacts"] = ordered_json(artifacts);
    manifest["extras"] = ordered_json(extras);
    write_json(file, manifest);
}

std::string manifest_comparable_text(const std::filesystem::path& path) {
    ordered_json manifest = read_json(path);
    manifest.erase("timestamp");
    return manifest.dump(2) + "\n";
}

}  // namespace voxflow
