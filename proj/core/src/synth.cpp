#include "voxflow/synth.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "voxflow/errors.hpp"
#include "voxflow/rng.hpp"

namespace voxflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_finite3(const std::array<double, 3>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw numeric_error(std::string(what) + " must be finite");
    }
}

std::array<double, 3> voxel_center(int x, int y, int z, int side) {
    const double inv = 1.0 / static_cast<double>(side);
    return {(x + 0.5) * inv, (y + 0.5) * inv, (z + 0.5) * inv};
}

// A smooth scalar of position: sin(2π a·p + φ) with seeded direction and phase.
struct SinusoidRule {
    std::array<double, 3> a{};
    double phase = 0.0;

    static SinusoidRule draw(SeededRng& rng) {
        SinusoidRule r;
        for (double& c : r.a) c = rng.gaussian();
        r.phase = rng.uniform() * kTwoPi;
        return r;
    }
    double operator()(const std::array<double, 3>& p) const {
        return std::sin(kTwoPi * (a[0] * p[0] + a[1] * p[1] + a[2] * p[2]) + phase);
    }
};

// Values are squeezed through f32 so that what the generator returns is
// exactly what a round-trip through the sparse/dense disk formats yields.
double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

double parse_double_field(std::string_view text, const char* what) {
    double out = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr != end) {
        throw usage_error("cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
    }
    return out;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(text.substr(start));
            return parts;
        }
        parts.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

}  // namespace

const char* shape_kind_name(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::sphere: return "sphere";
        case ShapeKind::box: return "box";
        case ShapeKind::shape_union: return "union";
        case ShapeKind::l_shape: return "l-shape";
    }
    throw numeric_error("invalid shape kind");
}

ShapeKind parse_shape_kind(std::string_view name) {
    if (name == "sphere") return ShapeKind::sphere;
    if (name == "box") return ShapeKind::box;
    if (name == "union") return ShapeKind::shape_union;
    if (name == "l-shape" || name == "l_shape") return ShapeKind::l_shape;
    throw usage_error("unknown shape kind '" + std::string(name) +
                      "' (expected sphere, box, union, or l-shape)");
}

bool ShapeSpec::inside(const std::array<double, 3>& p) const {
    const auto in_sphere = [&] {
        const double dx = p[0] - center[0];
        const double dy = p[1] - center[1];
        const double dz = p[2] - center[2];
        return dx * dx + dy * dy + dz * dz <= radius * radius;
    };
    const auto in_box = [&] {
        for (int i = 0; i < 3; ++i) {
            if (p[i] < box_lo[i] || p[i] > box_hi[i]) return false;
        }
        return true;
    };
    switch (kind) {
        case ShapeKind::sphere: return in_sphere();
        case ShapeKind::box: return in_box();
        case ShapeKind::shape_union: return in_sphere() || in_box();
        case ShapeKind::l_shape: {
            if (!in_box()) return false;
            bool upper_corner = true;
            for (int i = 0; i < 3; ++i) {
                if (p[i] < 0.5 * (box_lo[i] + box_hi[i])) {
                    upper_corner = false;
                    break;
                }
            }
            return !upper_corner;
        }
    }
    throw numeric_error("invalid shape kind");
}

void ShapeSpec::validate() const {
    check_finite3(center, "shape center");
    check_finite3(box_lo, "shape box bounds");
    check_finite3(box_hi, "shape box bounds");
    if (!std::isfinite(radius)) throw numeric_error("shape radius must be finite");
    const bool uses_sphere = kind == ShapeKind::sphere || kind == ShapeKind::shape_union;
    const bool uses_box = kind != ShapeKind::sphere;
    if (uses_sphere && radius <= 0.0) throw numeric_error("shape radius must be positive");
    if (uses_box) {
        for (int i = 0; i < 3; ++i) {
            if (box_lo[i] >= box_hi[i]) {
                throw numeric_error("shape box bounds must satisfy lo < hi per axis");
            }
        }
    }
}

Asset gen_asset(const ShapeSpec& spec, int n_st, int n_slat, int c_slat) {
    spec.validate();
    if (n_st < 4 || n_slat < 4) throw numeric_error("asset resolutions must be at least 4");
    if (c_slat < 3) {
        throw numeric_error("sparse feature width must be at least 3 (position channels)");
    }

    Asset asset;
    asset.st_grid = DenseLatentGrid::zeros({n_st, n_st, n_st}, kStChannels);

    SeededRng coarse_rng(sub_seed(spec.seed, "st-coarse-rule"));
    const SinusoidRule coarse_rule = SinusoidRule::draw(coarse_rng);
    std::size_t occupied = 0;
    for (int x = 0; x < n_st; ++x) {
        for (int y = 0; y < n_st; ++y) {
            for (int z = 0; z < n_st; ++z) {
                const auto p = voxel_center(x, y, z, n_st);
                if (!spec.inside(p)) continue;
                asset.st_grid.at(x, y, z, 0) = 1.0;
                asset.st_grid.at(x, y, z, 1) = as_f32(coarse_rule(p));
                ++occupied;
            }
        }
    }
    if (occupied == 0) throw numeric_error("shape produced empty occupancy on the coarse grid");

    SeededRng feat_rng(sub_seed(spec.seed, "slat-feature-rule"));
    std::vector<SinusoidRule> rules;
    for (int c = 3; c < c_slat; ++c) rules.push_back(SinusoidRule::draw(feat_rng));

    asset.slat.resolution = n_slat;
    asset.slat.channels = c_slat;
    for (int x = 0; x < n_slat; ++x) {
        for (int y = 0; y < n_slat; ++y) {
            for (int z = 0; z < n_slat; ++z) {
                const auto p = voxel_center(x, y, z, n_slat);
                if (!spec.inside(p)) continue;
                const Coord3 m = map_coord({x, y, z}, n_slat, n_st);
                if (asset.st_grid.at(m[0], m[1], m[2], 0) <= kOccupancyThreshold) continue;
                asset.slat.coords.push_back({x, y, z});
                asset.slat.feats.push_back(as_f32(p[0]));
                asset.slat.feats.push_back(as_f32(p[1]));
                asset.slat.feats.push_back(as_f32(p[2]));
                for (const auto& rule : rules) asset.slat.feats.push_back(as_f32(rule(p)));
            }
        }
    }
    if (asset.slat.coords.empty()) {
        throw numeric_error("shape produced an empty sparse set at the fine resolution");
    }
    asset.validate();
    return asset;
}

void RegionSpec::validate() const {
    switch (kind) {
        case RegionKind::octant:
            for (int s : octant) {
                if (s != 1 && s != -1) throw numeric_error("octant signs must be +1 or -1");
            }
            return;
        case RegionKind::ball:
            check_finite3(center, "ball center");
            if (!std::isfinite(radius) || radius < 0.0) {
                throw numeric_error("ball radius must be finite and non-negative");
            }
            return;
        case RegionKind::slab:
            if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
                throw numeric_error("slab range must be finite with lo <= hi");
            }
            return;
    }
    throw numeric_error("invalid region kind");
}

RegionSpec parse_region(std::string_view text) {
    const std::size_t colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw usage_error("region '" + std::string(text) + "' needs the form kind:params");
    }
    const std::string_view kind = text.substr(0, colon);
    const std::string_view params = text.substr(colon + 1);
    RegionSpec region;
    if (kind == "octant") {
        region.kind = RegionKind::octant;
        if (params.size() != 3) {
            throw usage_error("octant region needs three signs, e.g. octant:+++");
        }
        for (int i = 0; i < 3; ++i) {
            if (params[i] == '+') region.octant[i] = +1;
            else if (params[i] == '-') region.octant[i] = -1;
            else throw usage_error("octant signs must be '+' or '-'");
        }
    } else if (kind == "ball") {
        region.kind = RegionKind::ball;
        const auto parts = split(params, ',');
        if (parts.size() != 4) {
            throw usage_error("ball region needs cx,cy,cz,r");
        }
        for (int i = 0; i < 3; ++i) region.center[i] = parse_double_field(parts[i], "ball center");
        region.radius = parse_double_field(parts[3], "ball radius");
    } else if (kind == "slab") {
        region.kind = RegionKind::slab;
        const auto parts = split(params, ',');
        if (parts.size() != 3) {
            throw usage_error("slab region needs axis,lo,hi");
        }
        if (parts[0] == "x") region.axis = Axis::x;
        else if (parts[0] == "y") region.axis = Axis::y;
        else if (parts[0] == "z") region.axis = Axis::z;
        else throw usage_error("slab axis must be x, y, or z");
        region.lo = parse_double_field(parts[1], "slab lo");
        region.hi = parse_double_field(parts[2], "slab hi");
    } else {
        throw usage_error("unknown region kind '" + std::string(kind) +
                          "' (expected octant, ball, or slab)");
    }
    try {
        region.validate();
    } catch (const Error& e) {
        throw usage_error(e.what());
    }
    return region;
}

std::string region_to_string(const RegionSpec& region) {
    switch (region.kind) {
        case RegionKind::octant: {
            std::string s = "octant:";
            for (int v : region.octant) s += v > 0 ? '+' : '-';
            return s;
        }
        case RegionKind::ball:
            return "ball:" + std::to_string(region.center[0]) + "," +
                   std::to_string(region.center[1]) + "," + std::to_string(region.center[2]) +
                   "," + std::to_string(region.radius);
        case RegionKind::slab: {
            const char axis_names[] = {'x', 'y', 'z'};
            return std::string("slab:") + axis_names[axis_index(region.axis)] + "," +
                   std::to_string(region.lo) + "," + std::to_string(region.hi);
        }
    }
    throw numeric_error("invalid region kind");
}

BinaryMask3D gen_edit_scenario(const Asset& asset, const RegionSpec& region,
                               ScenarioReport* report) {
    asset.validate();
    region.validate();
    const int side = asset.st_grid.dims.h;
    BinaryMask3D mask = BinaryMask3D::zeros(asset.st_grid.dims);

    switch (region.kind) {
        case RegionKind::octant: {
            const int half = side / 2;
            for (int x = 0; x < side; ++x) {
                for (int y = 0; y < side; ++y) {
                    for (int z = 0; z < side; ++z) {
                        const Coord3 c{x, y, z};
                        bool in = true;
                        for (int i = 0; i < 3; ++i) {
                            const bool upper = c[i] >= half;
                            if (upper != (region.octant[i] > 0)) {
                                in = false;
                                break;
                            }
                        }
                        if (in) mask.set(x, y, z);
                    }
                }
            }
            break;
        }
        case RegionKind::ball: {
            if (region.radius == 0.0) {
                Coord3 c;
                for (int i = 0; i < 3; ++i) {
                    c[i] = static_cast<int>(std::floor(region.center[i] * side));
                }
                if (mask.dims.contains(c)) mask.set(c[0], c[1], c[2]);
            } else {
                const double r2 = region.radius * region.radius;
                for (int x = 0; x < side; ++x) {
                    for (int y = 0; y < side; ++y) {
                        for (int z = 0; z < side; ++z) {
                            const auto p = voxel_center(x, y, z, side);
                            const double dx = p[0] - region.center[0];
                            const double dy = p[1] - region.center[1];
                            const double dz = p[2] - region.center[2];
                            if (dx * dx + dy * dy + dz * dz <= r2) mask.set(x, y, z);
                        }
                    }
                }
            }
            break;
        }
        case RegionKind::slab: {
            const int ax = axis_index(region.axis);
            for (int x = 0; x < side; ++x) {
                for (int y = 0; y < side; ++y) {
                    for (int z = 0; z < side; ++z) {
                        const auto p = voxel_center(x, y, z, side);
                        if (p[ax] >= region.lo && p[ax] <= region.hi) mask.set(x, y, z);
                    }
                }
            }
            break;
        }
    }

    if (report != nullptr) {
        report->mask_count = mask.count();
        report->empty_region = report->mask_count == 0;
        report->mask_active_overlap = 0;
        for (int x = 0; x < side; ++x) {
            for (int y = 0; y < side; ++y) {
                for (int z = 0; z < side; ++z) {
                    if (mask.test(x, y, z) &&
                        asset.st_grid.at(x, y, z, 0) > kOccupancyThreshold) {
                        ++report->mask_active_overlap;
                    }
                }
            }
        }
        const CoordinateSet active = slat_coords_on_st(asset);
        report->keep_count = keep_complement(active.coords, mask).size();
    }
    return mask;
}

}  // namespace voxflow
