#include "sepseg/transform.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sepseg/error.hpp"

namespace sepseg {

namespace {

void validate(const TransformSpec& t) {
    if (t.hs.size() != t.xs.size()) throw ConfigError("transform anchors: hs and xs lengths differ");
    if (t.hs.size() < 2) throw ConfigError("transform needs at least 2 anchors");
    for (std::size_t i = 1; i < t.hs.size(); ++i)
        if (!(t.hs[i] > t.hs[i - 1]))
            throw ConfigError("transform HU anchors must be strictly increasing");
    for (std::size_t i = 0; i < t.xs.size(); ++i) {
        if (!(t.xs[i] >= 0.0 && t.xs[i] <= 1.0))
            throw ConfigError("transform output anchors must lie in [0,1]");
        if (i > 0 && t.xs[i] < t.xs[i - 1])
            throw ConfigError("transform output anchors must be non-decreasing");
    }
    if (t.xs.front() != 0.0 || t.xs.back() != 1.0)
        throw ConfigError("transform output anchors must start at 0 and end at 1");
}

}  // namespace

TransformSpec make_slf(const std::vector<double>& xs, const std::vector<double>& hs) {
    TransformSpec t{hs, xs};
    validate(t);
    return t;
}

TransformSpec make_nlf(double h1, double h2) { return make_slf({0.0, 1.0}, {h1, h2}); }

TransformSpec transform_preset(const std::string& name) {
    const std::vector<double> slf_xs{0.0, 0.2, 0.8, 1.0};
    if (name == "SLF1") return make_slf(slf_xs, {-500, -200, 200, 1500});
    if (name == "SLF2") return make_slf(slf_xs, {-500, -100, 100, 1500});
    if (name == "SLF3") return make_slf(slf_xs, {-500, -100, 400, 1500});
    if (name == "NLF1") return make_nlf(-100, 100);
    if (name == "NLF2") return make_nlf(-500, 800);
    throw ConfigError("unknown transform preset \"" + name +
                      "\" (expected SLF1, SLF2, SLF3, NLF1 or NLF2)");
}

const std::vector<std::string>& transform_preset_names() {
    static const std::vector<std::string> names{"SLF1", "SLF2", "SLF3", "NLF1", "NLF2"};
    return names;
}

double apply_transform_scalar(const TransformSpec& t, double h) {
    // Boundary rule: h exactly equal to the first anchor maps to 0.
    if (h <= t.hs.front()) return 0.0;
    if (h > t.hs.back()) return 1.0;
    std::size_t i = 1;
    while (h > t.hs[i]) ++i;  // h in (hs[i-1], hs[i]]; K is tiny, linear scan wins
    const double f = (h - t.hs[i - 1]) / (t.hs[i] - t.hs[i - 1]);
    return t.xs[i - 1] + f * (t.xs[i] - t.xs[i - 1]);
}

Volume apply_transform(const Volume& v, const TransformSpec& t) {
    validate(t);
    if (v.intensity_kind != IntensityKind::HU)
        throw ConfigError("intensity transform expects an HU volume");
    const std::int64_t n = v.voxel_count();
    std::vector<float> out(static_cast<std::size_t>(n));
    if (v.is_i16()) {
        const auto& src = v.i16();
        for (std::int64_t i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] =
                static_cast<float>(apply_transform_scalar(t, static_cast<double>(src[static_cast<std::size_t>(i)])));
    } else {
        const auto& src = v.f32();
        for (std::int64_t i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] =
                static_cast<float>(apply_transform_scalar(t, static_cast<double>(src[static_cast<std::size_t>(i)])));
    }
    return make_volume(v.dims, v.spacing_mm, IntensityKind::Normalized, std::move(out));
}

std::string transform_to_json(const TransformSpec& t) {
    nlohmann::json j;
    j["xs"] = t.xs;
    j["hs"] = t.hs;
    return j.dump(2) + "\n";
}

TransformSpec transform_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid transform JSON: ") + e.what());
    }
    if (!j.contains("xs") || !j.contains("hs")) throw ConfigError("transform JSON needs \"xs\" and \"hs\"");
    return make_slf(j["xs"].get<std::vector<double>>(), j["hs"].get<std::vector<double>>());
}

TransformSpec resolve_transform(const std::string& name_or_path) {
    for (const auto& name : transform_preset_names())
        if (name == name_or_path) return transform_preset(name);
    std::ifstream in(name_or_path);
    if (!in)
        throw ConfigError("transform \"" + name_or_path +
                          "\" is neither a preset name nor a readable JSON file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return transform_from_json(text);
}

}  // namespace sepseg
