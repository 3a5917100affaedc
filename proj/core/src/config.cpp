#include "voxflow/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "voxflow/errors.hpp"

namespace voxflow {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

int parse_int(const std::string& key, std::string_view text) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw usage_error("config key '" + key + "': cannot parse integer from '" +
                          std::string(text) + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, std::string_view text) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw usage_error("config key '" + key + "': cannot parse unsigned integer from '" +
                          std::string(text) + "'");
    }
    return out;
}

// strtod accepts both decimal and hexfloat spellings; requires full consumption.
double parse_double(const std::string& key, std::string_view text) {
    const std::string s(trim(text));
    if (s.empty()) throw usage_error("config key '" + key + "' has an empty numeric value");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) {
        throw usage_error("config key '" + key + "': cannot parse number from '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, std::string_view text) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw usage_error("config key '" + key + "': expected a boolean, got '" + std::string(text) +
                      "'");
}

std::array<double, 3> parse_vec3(const std::string& key, std::string_view text) {
    std::array<double, 3> out{};
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
        const bool last = i == 2;
        const std::size_t pos = text.find(',', start);
        if (last != (pos == std::string_view::npos)) {
            throw usage_error("config key '" + key + "': expected three comma-separated numbers");
        }
        const std::string_view part =
            last ? text.substr(start) : text.substr(start, pos - start);
        out[std::size_t(i)] = parse_double(key, part);
        start = pos + 1;
    }
    return out;
}

// Key schema with built-in defaults; the resolved manifest lists exactly
// these keys, carrying the merged textual values verbatim.
const std::vector<std::pair<std::string, std::string>>& default_table() {
    static const std::vector<std::pair<std::string, std::string>> table = {
        {"steps", "25"},
        {"schedule", "uniform"},
        {"schedule_exponent", "3.0"},
        {"guidance_omega", "5.0"},
        {"guidance_lo", "0.5"},
        {"guidance_hi", "1.0"},
        {"latent_replacement", "true"},
        {"soft_mask", "false"},
        {"dilation_radius", "2"},
        {"sigma", "1.5"},
        {"kv_replacement", "true"},
        {"attention_mask", "false"},
        {"cond", "edit-target"},
        {"neg", ""},
        {"st_field", "toy"},
        {"slat_field", "toy"},
        {"arch_layers", "4"},
        {"arch_model_dim", "64"},
        {"arch_heads", "4"},
        {"arch_ffn_mult", "2"},
        {"st_weight_seed", "1"},
        {"slat_weight_seed", "2"},
        {"st_constant", "0.25"},
        {"st_lambda", "-0.5"},
        {"slat_constant", "0.25"},
        {"slat_lambda", "-0.5"},
        {"seed", "0"},
        {"shape", "sphere"},
        {"shape_center", "0.5,0.5,0.5"},
        {"shape_radius", "0.35"},
        {"shape_box_lo", "0.25,0.25,0.25"},
        {"shape_box_hi", "0.75,0.75,0.75"},
        {"shape_seed", "7"},
        {"region", "octant:+++"},
        {"n_st", "16"},
        {"n_slat", "16"},
        {"c_slat", "8"},
    };
    return table;
}

}  // namespace

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : parse_double(key, it->second);
}

int ConfigMap::get_int(const std::string& key, int fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : parse_int(key, it->second);
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : parse_u64(key, it->second);
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : parse_bool(key, it->second);
}

ConfigMap parse_config_text(std::string_view text) {
    ConfigMap config;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        ++line_no;
        const std::size_t nl = text.find('\n', start);
        std::string_view line =
            nl == std::string_view::npos ? text.substr(start) : text.substr(start, nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

        const std::size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw usage_error("config line " + std::to_string(line_no) +
                              " is not a key=value assignment");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) {
            throw usage_error("config line " + std::to_string(line_no) + " has an empty key");
        }
        config.set(key, value);
    }
    return config;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    try {
        return parse_config_text(buf.str());
    } catch (const Error& e) {
        throw usage_error(path.string() + ": " + e.what());
    }
}

void apply_override(ConfigMap& config, std::string_view assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw usage_error("override '" + std::string(assignment) + "' is not key=value");
    }
    const std::string key(trim(assignment.substr(0, eq)));
    const std::string value(trim(assignment.substr(eq + 1)));
    if (key.empty()) {
        throw usage_error("override '" + std::string(assignment) + "' has an empty key");
    }
    config.set(key, value);
}

ConfigMap merge_config(const std::optional<std::filesystem::path>& config_file,
                       std::span<const std::string> overrides) {
    ConfigMap merged;
    if (const char* env_seed = std::getenv("VOXFLOW_SEED")) {
        merged.set("seed", env_seed);
    }
    if (config_file) {
        const ConfigMap from_file = load_config_file(*config_file);
        for (const auto& [k, v] : from_file.entries()) merged.set(k, v);
    }
    for (const std::string& assignment : overrides) apply_override(merged, assignment);
    return merged;
}

Settings resolve_settings(const ConfigMap& merged) {
    const auto& defaults = default_table();
    std::map<std::string, std::string> resolved;
    for (const auto& [k, v] : defaults) resolved[k] = v;
    for (const auto& [k, v] : merged.entries()) {
        if (resolved.count(k) == 0) throw usage_error("unknown config key '" + k + "'");
        resolved[k] = v;
    }
    const auto value = [&](const char* key) -> const std::string& { return resolved.at(key); };

    Settings s;
    RunConfig& r = s.run;
    r.steps = parse_int("steps", value("steps"));
    const std::string& sched = value("schedule");
    if (sched == "uniform") {
        r.schedule_kind = Schedule::Kind::uniform;
    } else if (sched == "shifted") {
        r.schedule_kind = Schedule::Kind::shifted;
    } else {
        throw usage_error("config key 'schedule': expected uniform or shifted, got '" + sched +
                          "'");
    }
    r.schedule_exponent = parse_double("schedule_exponent", value("schedule_exponent"));
    r.guidance.omega = parse_double("guidance_omega", value("guidance_omega"));
    r.guidance.lo = parse_double("guidance_lo", value("guidance_lo"));
    r.guidance.hi = parse_double("guidance_hi", value("guidance_hi"));
    r.latent_replacement = parse_bool("latent_replacement", value("latent_replacement"));
    r.use_soft_mask = parse_bool("soft_mask", value("soft_mask"));
    r.dilation_radius = parse_int("dilation_radius", value("dilation_radius"));
    r.sigma = parse_double("sigma", value("sigma"));
    r.use_kv_replacement = parse_bool("kv_replacement", value("kv_replacement"));
    r.use_attention_mask = parse_bool("attention_mask", value("attention_mask"));
    r.cond_name = value("cond");
    r.neg_name = value("neg");
    r.st_field.kind = parse_field_kind(value("st_field"));
    r.slat_field.kind = parse_field_kind(value("slat_field"));

    ToyArch arch;
    arch.layers = parse_int("arch_layers", value("arch_layers"));
    arch.model_dim = parse_int("arch_model_dim", value("arch_model_dim"));
    arch.heads = parse_int("arch_heads", value("arch_heads"));
    arch.ffn_mult = parse_int("arch_ffn_mult", value("arch_ffn_mult"));
    r.st_field.arch = arch;
    r.slat_field.arch = arch;
    r.st_field.weight_seed = parse_u64("st_weight_seed", value("st_weight_seed"));
    r.slat_field.weight_seed = parse_u64("slat_weight_seed", value("slat_weight_seed"));
    r.st_field.constant = parse_double("st_constant", value("st_constant"));
    r.st_field.lambda = parse_double("st_lambda", value("st_lambda"));
    r.slat_field.constant = parse_double("slat_constant", value("slat_constant"));
    r.slat_field.lambda = parse_double("slat_lambda", value("slat_lambda"));
    r.seed = parse_u64("seed", value("seed"));

    s.shape.kind = parse_shape_kind(value("shape"));
    s.shape.center = parse_vec3("shape_center", value("shape_center"));
    s.shape.radius = parse_double("shape_radius", value("shape_radius"));
    s.shape.box_lo = parse_vec3("shape_box_lo", value("shape_box_lo"));
    s.shape.box_hi = parse_vec3("shape_box_hi", value("shape_box_hi"));
    s.shape.seed = parse_u64("shape_seed", value("shape_seed"));
    s.region = parse_region(value("region"));
    s.n_st = parse_int("n_st", value("n_st"));
    s.n_slat = parse_int("n_slat", value("n_slat"));
    s.c_slat = parse_int("c_slat", value("c_slat"));

    try {
        r.validate();
        s.shape.validate();
    } catch (const Error& e) {
        throw usage_error(e.what());
    }
    s.resolved = std::move(resolved);
    return s;
}

}  // namespace voxflow
