#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "voxflow/pipeline.hpp"
#include "voxflow/synth.hpp"

namespace voxflow {

// Flat key=value configuration bag; later assignments overwrite earlier ones.
class ConfigMap {
public:
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

// One "key = value" per line; '#' starts a comment; blank lines ignored.
ConfigMap parse_config_text(std::string_view text);
ConfigMap load_config_file(const std::filesystem::path& path);

// "key=value" command-line override; anything else is a usage error.
void apply_override(ConfigMap& config, std::string_view assignment);

// Layered resolution: built-in defaults, then the VOXFLOW_SEED environment
// variable (as `seed`), then the optional config file, then overrides.
ConfigMap merge_config(const std::optional<std::filesystem::path>& config_file,
                       std::span<const std::string> overrides);

// Everything a run can configure, materialized with defaults applied.
struct Settings {
    RunConfig run;
    ShapeSpec shape;
    RegionSpec region;
    int n_st = 16;
    int n_slat = 16;
    int c_slat = 8;

    // Textual form of every key after resolution: defaults overlaid with the
    // merged sources verbatim, so manifests reproduce exactly.
    std::map<std::string, std::string> resolved;
};

// Typed resolution; rejects unknown keys and invalid values as usage errors.
Settings resolve_settings(const ConfigMap& merged);

}  // namespace voxflow
