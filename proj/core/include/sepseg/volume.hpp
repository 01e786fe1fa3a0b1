#pragma once

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "sepseg/rng.hpp"

namespace sepseg {

// Voxel counts along (depth, height, width) = (z, y, x).
struct Dims3 {
    std::int64_t d = 0, h = 0, w = 0;
    std::int64_t count() const { return d * h * w; }
    bool operator==(const Dims3&) const = default;
};

// Physical voxel size in millimetres along (z, y, x). Head-and-neck CT is
// strongly anisotropic (inter-slice spacing ~3 mm vs ~1 mm in-plane), so
// spacing is carried everywhere and never resampled away.
struct Spacing3 {
    double z = 1.0, y = 1.0, x = 1.0;
    double voxel_volume_mm3() const { return z * y * x; }
    bool operator==(const Spacing3&) const = default;
};

inline std::int64_t linear_index(const Dims3& dims, std::int64_t z, std::int64_t y, std::int64_t x) {
    return (z * dims.h + y) * dims.w + x;
}

enum class IntensityKind { HU, Normalized };

// Dense 3D scalar grid. HU data is stored as signed 16-bit, normalized data
// as float32; both are immutable after construction in normal use.
struct Volume {
    Dims3 dims;
    Spacing3 spacing_mm;
    IntensityKind intensity_kind = IntensityKind::HU;
    std::variant<std::vector<std::int16_t>, std::vector<float>> data;

    bool is_i16() const { return data.index() == 0; }
    const std::vector<std::int16_t>& i16() const { return std::get<0>(data); }
    const std::vector<float>& f32() const { return std::get<1>(data); }
    std::int64_t voxel_count() const { return dims.count(); }

    double value_at(std::int64_t i) const {
        return is_i16() ? static_cast<double>(i16()[i]) : static_cast<double>(f32()[i]);
    }
};

// Validates the invariants (dims >= 1, spacing > 0, data length, normalized
// range) and throws DataError on violation.
Volume make_volume(Dims3 dims, Spacing3 spacing, IntensityKind kind,
                   std::variant<std::vector<std::int16_t>, std::vector<float>> data);

// Per-voxel class labels over the same geometry; class 0 is background.
struct LabelMap {
    Dims3 dims;
    Spacing3 spacing_mm;
    int num_classes = 2;
    std::vector<std::uint16_t> labels;

    std::int64_t voxel_count() const { return dims.count(); }
};

LabelMap make_labelmap(Dims3 dims, Spacing3 spacing, int num_classes, std::vector<std::uint16_t> labels);

// Per-class probability grid, class-major layout (C, D, H, W).
struct ProbMap {
    Dims3 dims;
    Spacing3 spacing_mm;
    int num_classes = 2;
    std::vector<float> probs;

    std::int64_t voxel_count() const { return dims.count(); }
    float at(int c, std::int64_t voxel) const {
        return probs[static_cast<std::int64_t>(c) * dims.count() + voxel];
    }
};

ProbMap make_probmap(Dims3 dims, Spacing3 spacing, int num_classes, std::vector<float> probs);

// Per-voxel predictive entropy (nats) of an N-member ensemble. Values are
// drawn from the finite set of entropies of the integer partitions of N.
struct UncertaintyMap {
    Dims3 dims;
    Spacing3 spacing_mm;
    int num_members = 1;
    std::vector<double> entropy;  // exact partition entropies, hence 64-bit

    std::int64_t voxel_count() const { return dims.count(); }
};

// Deterministic center crop; offsets are floor((dims - size) / 2).
// Spacing metadata is preserved unchanged.
Volume center_crop(const Volume& v, Dims3 size);
LabelMap center_crop(const LabelMap& g, Dims3 size);

// Crop offsets used by center_crop; exposed for tests and tiling code.
Dims3 center_crop_offsets(Dims3 dims, Dims3 size);

// Uniform random crop over all valid offsets, reproducible from the caller's
// generator. Volume and labels are cropped at the same offsets.
std::pair<Volume, LabelMap> random_crop(const Volume& v, const LabelMap& g, Dims3 size, SplitMix64& rng);

// Extract the sub-box at an explicit offset (bounds-checked).
Volume crop_at(const Volume& v, Dims3 offset, Dims3 size);
LabelMap crop_at(const LabelMap& g, Dims3 offset, Dims3 size);

}  // namespace sepseg
