#include "sepseg/volume_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sepseg/error.hpp"

namespace sepseg {

namespace {

using nlohmann::json;

// Explicit little-endian byte (de)coding: files must be byte-identical no
// matter the host.
void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + path);
}

json load_sidecar(const std::string& meta_path) {
    const std::string text = read_file(meta_path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError("invalid JSON sidecar " + meta_path + ": " + e.what());
    }
    return j;
}

Dims3 dims_from(const json& j, const std::string& meta_path) {
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
        throw DataError("sidecar " + meta_path + " missing 3-element \"dims\"");
    return Dims3{j["dims"][0].get<std::int64_t>(), j["dims"][1].get<std::int64_t>(),
                 j["dims"][2].get<std::int64_t>()};
}

Spacing3 spacing_from(const json& j, const std::string& meta_path) {
    if (!j.contains("spacing_mm") || !j["spacing_mm"].is_array() || j["spacing_mm"].size() != 3)
        throw DataError("sidecar " + meta_path + " missing 3-element \"spacing_mm\"");
    return Spacing3{j["spacing_mm"][0].get<double>(), j["spacing_mm"][1].get<double>(),
                    j["spacing_mm"][2].get<double>()};
}

std::string require_string(const json& j, const char* key, const std::string& meta_path) {
    if (!j.contains(key) || !j[key].is_string())
        throw DataError("sidecar " + meta_path + " missing string \"" + key + "\"");
    return j[key].get<std::string>();
}

std::string raw_bytes_checked(const std::string& meta_path, std::int64_t expected_bytes) {
    const std::string raw_path = raw_path_for(meta_path);
    const std::string bytes = read_file(raw_path);
    if (static_cast<std::int64_t>(bytes.size()) != expected_bytes)
        throw DataError("raw file " + raw_path + " has " + std::to_string(bytes.size()) +
                        " bytes, sidecar declares " + std::to_string(expected_bytes));
    return bytes;
}

std::vector<std::int16_t> decode_i16(const std::string& bytes) {
    std::vector<std::int16_t> out(bytes.size() / 2);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::int16_t>(get_u16(p + 2 * i));
    return out;
}

std::vector<std::uint16_t> decode_u16(const std::string& bytes) {
    std::vector<std::uint16_t> out(bytes.size() / 2);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_u16(p + 2 * i);
    return out;
}

std::vector<double> decode_f64(const std::string& bytes) {
    std::vector<double> out(bytes.size() / 8);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t v = 0;
        for (int b = 7; b >= 0; --b) v = (v << 8) | p[8 * i + static_cast<std::size_t>(b)];
        out[i] = std::bit_cast<double>(v);
    }
    return out;
}

std::vector<float> decode_f32(const std::string& bytes) {
    std::vector<float> out(bytes.size() / 4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    return out;
}

std::string encode_i16(const std::vector<std::int16_t>& v) {
    std::string bytes;
    bytes.reserve(v.size() * 2);
    for (std::int16_t x : v) put_u16(bytes, static_cast<std::uint16_t>(x));
    return bytes;
}

std::string encode_u16(const std::vector<std::uint16_t>& v) {
    std::string bytes;
    bytes.reserve(v.size() * 2);
    for (std::uint16_t x : v) put_u16(bytes, x);
    return bytes;
}

std::string encode_f64(const std::vector<double>& v) {
    std::string bytes;
    bytes.reserve(v.size() * 8);
    for (double x : v) {
        const std::uint64_t u = std::bit_cast<std::uint64_t>(x);
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
    return bytes;
}

std::string encode_f32(const std::vector<float>& v) {
    std::string bytes;
    bytes.reserve(v.size() * 4);
    for (float x : v) put_u32(bytes, std::bit_cast<std::uint32_t>(x));
    return bytes;
}

void write_sidecar(const std::string& meta_path, const json& j) {
    // json uses ordered maps, so the serialization is deterministic.
    write_file(meta_path, j.dump(2) + "\n");
}

}  // namespace

std::string raw_path_for(const std::string& meta_path) {
    static const std::string suffix = ".json";
    if (meta_path.size() <= suffix.size() ||
        meta_path.compare(meta_path.size() - suffix.size(), suffix.size(), suffix) != 0)
        throw ConfigError("sidecar path must end in .json: " + meta_path);
    return meta_path.substr(0, meta_path.size() - suffix.size());
}

Volume load_volume(const std::string& meta_path) {
    const json j = load_sidecar(meta_path);
    const Dims3 dims = dims_from(j, meta_path);
    const Spacing3 spacing = spacing_from(j, meta_path);
    const std::string dtype = require_string(j, "dtype", meta_path);
    const std::string kind_s = require_string(j, "intensity_kind", meta_path);

    IntensityKind kind;
    if (kind_s == "HU")
        kind = IntensityKind::HU;
    else if (kind_s == "Normalized")
        kind = IntensityKind::Normalized;
    else
        throw DataError("sidecar " + meta_path + " has unknown intensity_kind \"" + kind_s + "\"");

    if (dtype == "i16") {
        const std::string bytes = raw_bytes_checked(meta_path, dims.count() * 2);
        return make_volume(dims, spacing, kind, decode_i16(bytes));
    }
    if (dtype == "f32") {
        const std::string bytes = raw_bytes_checked(meta_path, dims.count() * 4);
        return make_volume(dims, spacing, kind, decode_f32(bytes));
    }
    throw DataError("sidecar " + meta_path + " has unknown dtype \"" + dtype + "\"");
}

void save_volume(const Volume& v, const std::string& meta_path) {
    json j;
    j["dims"] = {v.dims.d, v.dims.h, v.dims.w};
    j["spacing_mm"] = {v.spacing_mm.z, v.spacing_mm.y, v.spacing_mm.x};
    j["dtype"] = v.is_i16() ? "i16" : "f32";
    j["intensity_kind"] = v.intensity_kind == IntensityKind::HU ? "HU" : "Normalized";
    write_sidecar(meta_path, j);
    write_file(raw_path_for(meta_path), v.is_i16() ? encode_i16(v.i16()) : encode_f32(v.f32()));
}

LabelMap load_labelmap(const std::string& meta_path) {
    const json j = load_sidecar(meta_path);
    const Dims3 dims = dims_from(j, meta_path);
    const Spacing3 spacing = spacing_from(j, meta_path);
    if (require_string(j, "dtype", meta_path) != "u16")
        throw DataError("label sidecar " + meta_path + " must declare dtype u16");
    if (!j.contains("num_classes")) throw DataError("label sidecar " + meta_path + " missing num_classes");
    const int num_classes = j["num_classes"].get<int>();
    const std::string bytes = raw_bytes_checked(meta_path, dims.count() * 2);
    return make_labelmap(dims, spacing, num_classes, decode_u16(bytes));
}

void save_labelmap(const LabelMap& g, const std::string& meta_path) {
    json j;
    j["dims"] = {g.dims.d, g.dims.h, g.dims.w};
    j["spacing_mm"] = {g.spacing_mm.z, g.spacing_mm.y, g.spacing_mm.x};
    j["dtype"] = "u16";
    j["num_classes"] = g.num_classes;
    write_sidecar(meta_path, j);
    write_file(raw_path_for(meta_path), encode_u16(g.labels));
}

ProbMap load_probmap(const std::string& meta_path) {
    const json j = load_sidecar(meta_path);
    const Dims3 dims = dims_from(j, meta_path);
    const Spacing3 spacing = spacing_from(j, meta_path);
    if (require_string(j, "dtype", meta_path) != "f32")
        throw DataError("probability sidecar " + meta_path + " must declare dtype f32");
    if (!j.contains("num_classes")) throw DataError("probability sidecar " + meta_path + " missing num_classes");
    const int num_classes = j["num_classes"].get<int>();
    const std::string bytes = raw_bytes_checked(meta_path, dims.count() * num_classes * 4);
    return make_probmap(dims, spacing, num_classes, decode_f32(bytes));
}

void save_probmap(const ProbMap& p, const std::string& meta_path) {
    json j;
    j["dims"] = {p.dims.d, p.dims.h, p.dims.w};
    j["spacing_mm"] = {p.spacing_mm.z, p.spacing_mm.y, p.spacing_mm.x};
    j["dtype"] = "f32";
    j["num_classes"] = p.num_classes;
    write_sidecar(meta_path, j);
    write_file(raw_path_for(meta_path), encode_f32(p.probs));
}

UncertaintyMap load_uncertainty(const std::string& meta_path) {
    const json j = load_sidecar(meta_path);
    const Dims3 dims = dims_from(j, meta_path);
    const Spacing3 spacing = spacing_from(j, meta_path);
    if (require_string(j, "dtype", meta_path) != "f64")
        throw DataError("uncertainty sidecar " + meta_path + " must declare dtype f64");
    if (!j.contains("num_members")) throw DataError("uncertainty sidecar " + meta_path + " missing num_members");
    const int num_members = j["num_members"].get<int>();
    const std::string bytes = raw_bytes_checked(meta_path, dims.count() * 8);
    UncertaintyMap u{dims, spacing, num_members, decode_f64(bytes)};
    return u;
}

void save_uncertainty(const UncertaintyMap& u, const std::string& meta_path) {
    json j;
    j["dims"] = {u.dims.d, u.dims.h, u.dims.w};
    j["spacing_mm"] = {u.spacing_mm.z, u.spacing_mm.y, u.spacing_mm.x};
    j["dtype"] = "f64";
    j["num_members"] = u.num_members;
    write_sidecar(meta_path, j);
    write_file(raw_path_for(meta_path), encode_f64(u.entropy));
}

}  // namespace sepseg
