#include "sepseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <json.hpp>

#include "sepseg/error.hpp"

namespace sepseg {

namespace {

constexpr double kHuMin = -1000.0;
constexpr double kHuMax = 3000.0;

void validate(const PhantomSpec& spec) {
    if (spec.dims.d < 1 || spec.dims.h < 1 || spec.dims.w < 1) throw DataError("phantom dims must be >= 1");
    if (!(spec.spacing_mm.z > 0 && spec.spacing_mm.y > 0 && spec.spacing_mm.x > 0))
        throw DataError("phantom spacing must be > 0");
    std::set<int> ids;
    for (const auto& s : spec.structures) {
        if (s.class_id < 1) throw DataError("phantom structure class ids start at 1");
        if (!(s.radii_mm[0] > 0 && s.radii_mm[1] > 0 && s.radii_mm[2] > 0))
            throw DataError("phantom ellipsoid radii must be > 0");
        if (s.noise_sigma_hu < 0) throw DataError("phantom noise sigma must be >= 0");
        ids.insert(s.class_id);
    }
    // Dense 1..C-1: every id up to the max must occur.
    if (!ids.empty()) {
        const int max_id = *ids.rbegin();
        for (int c = 1; c <= max_id; ++c)
            if (!ids.count(c))
                throw DataError("phantom class ids must be dense in 1..C-1; missing " + std::to_string(c));
    }
}

std::int16_t to_hu(double v) {
    return static_cast<std::int16_t>(std::lround(std::clamp(v, kHuMin, kHuMax)));
}

}  // namespace

int phantom_num_classes(const PhantomSpec& spec) {
    int max_id = 1;
    for (const auto& s : spec.structures) max_id = std::max(max_id, s.class_id);
    return max_id + 1;
}

std::pair<Volume, LabelMap> generate_phantom(const PhantomSpec& spec) {
    validate(spec);
    const std::int64_t n = spec.dims.count();
    std::vector<std::int16_t> hu(static_cast<std::size_t>(n), to_hu(spec.background_hu));
    std::vector<std::uint16_t> labels(static_cast<std::size_t>(n), 0);

    const SplitMix64 root(spec.seed);
    for (std::size_t si = 0; si < spec.structures.size(); ++si) {
        const PhantomStructure& s = spec.structures[si];
        SplitMix64 rng = root.split(static_cast<std::uint64_t>(si));
        // Bounding box in voxel indices keeps small structures cheap.
        auto lo = [](double c, double r, double sp) {
            return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((c - r) / sp - 0.5)));
        };
        auto hi = [](double c, double r, double sp, std::int64_t ext) {
            return std::min<std::int64_t>(ext - 1, static_cast<std::int64_t>(std::ceil((c + r) / sp - 0.5)));
        };
        const std::int64_t z0 = lo(s.center_mm[0], s.radii_mm[0], spec.spacing_mm.z);
        const std::int64_t z1 = hi(s.center_mm[0], s.radii_mm[0], spec.spacing_mm.z, spec.dims.d);
        const std::int64_t y0 = lo(s.center_mm[1], s.radii_mm[1], spec.spacing_mm.y);
        const std::int64_t y1 = hi(s.center_mm[1], s.radii_mm[1], spec.spacing_mm.y, spec.dims.h);
        const std::int64_t x0 = lo(s.center_mm[2], s.radii_mm[2], spec.spacing_mm.x);
        const std::int64_t x1 = hi(s.center_mm[2], s.radii_mm[2], spec.spacing_mm.x, spec.dims.w);
        for (std::int64_t z = z0; z <= z1; ++z) {
            const double dz = ((z + 0.5) * spec.spacing_mm.z - s.center_mm[0]) / s.radii_mm[0];
            for (std::int64_t y = y0; y <= y1; ++y) {
                const double dy = ((y + 0.5) * spec.spacing_mm.y - s.center_mm[1]) / s.radii_mm[1];
                for (std::int64_t x = x0; x <= x1; ++x) {
                    const double dx = ((x + 0.5) * spec.spacing_mm.x - s.center_mm[2]) / s.radii_mm[2];
                    if (dz * dz + dy * dy + dx * dx <= 1.0) {
                        const std::int64_t i = linear_index(spec.dims, z, y, x);
                        labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(s.class_id);
                        hu[static_cast<std::size_t>(i)] =
                            to_hu(s.mean_hu + s.noise_sigma_hu * rng.next_gaussian());
                    }
                }
            }
        }
    }

    Volume v = make_volume(spec.dims, spec.spacing_mm, IntensityKind::HU, std::move(hu));
    LabelMap g = make_labelmap(spec.dims, spec.spacing_mm, phantom_num_classes(spec), std::move(labels));
    return {std::move(v), std::move(g)};
}

PhantomSpec default_phantom_spec(Dims3 dims, Spacing3 spacing, std::uint64_t seed, int case_index) {
    PhantomSpec spec;
    spec.dims = dims;
    spec.spacing_mm = spacing;
    spec.background_hu = -120.0;
    spec.seed = seed * 1000003ull + static_cast<std::uint64_t>(case_index);

    const double ext_z = dims.d * spacing.z;
    const double ext_y = dims.h * spacing.y;
    const double ext_x = dims.w * spacing.x;

    SplitMix64 jitter(SplitMix64(seed).split(0x7fa0'0000ull + static_cast<std::uint64_t>(case_index)).next_u64());
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * jitter.next_double(); };

    auto add = [&](int cls, double cz, double cy, double cx, double rz, double ry, double rx, double hu,
                   double sigma) {
        PhantomStructure s;
        s.class_id = cls;
        s.center_mm[0] = cz * ext_z;
        s.center_mm[1] = cy * ext_y;
        s.center_mm[2] = cx * ext_x;
        s.radii_mm[0] = rz * ext_z;
        s.radii_mm[1] = ry * ext_y;
        s.radii_mm[2] = rx * ext_x;
        s.mean_hu = hu;
        s.noise_sigma_hu = sigma;
        spec.structures.push_back(s);
    };

    // Large soft structure, medium structure, and a small low-contrast one;
    // fractions of the physical extent with per-case jitter.
    add(1, uni(0.42, 0.58), uni(0.40, 0.50), uni(0.40, 0.50), uni(0.30, 0.38), uni(0.28, 0.36),
        uni(0.28, 0.36), 60.0, 25.0);
    add(2, uni(0.35, 0.55), uni(0.62, 0.72), uni(0.58, 0.70), uni(0.16, 0.22), uni(0.13, 0.18),
        uni(0.13, 0.18), -80.0, 25.0);
    add(3, uni(0.40, 0.60), uni(0.24, 0.34), uni(0.60, 0.72), uni(0.09, 0.13), uni(0.06, 0.09),
        uni(0.06, 0.09), 220.0, 35.0);
    return spec;
}

std::string phantom_spec_to_json(const PhantomSpec& spec) {
    nlohmann::json j;
    j["dims"] = {spec.dims.d, spec.dims.h, spec.dims.w};
    j["spacing_mm"] = {spec.spacing_mm.z, spec.spacing_mm.y, spec.spacing_mm.x};
    j["background_hu"] = spec.background_hu;
    j["seed"] = spec.seed;
    j["structures"] = nlohmann::json::array();
    for (const auto& s : spec.structures) {
        nlohmann::json sj;
        sj["class_id"] = s.class_id;
        sj["center_mm"] = {s.center_mm[0], s.center_mm[1], s.center_mm[2]};
        sj["radii_mm"] = {s.radii_mm[0], s.radii_mm[1], s.radii_mm[2]};
        sj["mean_hu"] = s.mean_hu;
        sj["noise_sigma_hu"] = s.noise_sigma_hu;
        j["structures"].push_back(sj);
    }
    return j.dump(2) + "\n";
}

PhantomSpec phantom_spec_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid phantom spec JSON: ") + e.what());
    }
    PhantomSpec spec;
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
        throw ConfigError("phantom spec needs a 3-element dims array");
    spec.dims = {j["dims"][0].get<std::int64_t>(), j["dims"][1].get<std::int64_t>(),
                 j["dims"][2].get<std::int64_t>()};
    if (j.contains("spacing_mm"))
        spec.spacing_mm = {j["spacing_mm"][0].get<double>(), j["spacing_mm"][1].get<double>(),
                           j["spacing_mm"][2].get<double>()};
    spec.background_hu = j.value("background_hu", -1000.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("structures"))
        for (const auto& sj : j["structures"]) {
            PhantomStructure s;
            s.class_id = sj.at("class_id").get<int>();
            for (int i = 0; i < 3; ++i) {
                s.center_mm[i] = sj.at("center_mm")[static_cast<std::size_t>(i)].get<double>();
                s.radii_mm[i] = sj.at("radii_mm")[static_cast<std::size_t>(i)].get<double>();
            }
            s.mean_hu = sj.at("mean_hu").get<double>();
            s.noise_sigma_hu = sj.value("noise_sigma_hu", 0.0);
            spec.structures.push_back(s);
        }
    return spec;
}

}  // namespace sepseg
