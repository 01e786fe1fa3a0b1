#include "sepseg/volume.hpp"

#include <string>

#include "sepseg/error.hpp"

namespace sepseg {

namespace {

void check_geometry(const Dims3& dims, const Spacing3& spacing) {
    if (dims.d < 1 || dims.h < 1 || dims.w < 1)
        throw DataError("volume dims must all be >= 1, got (" + std::to_string(dims.d) + "," +
                        std::to_string(dims.h) + "," + std::to_string(dims.w) + ")");
    if (!(spacing.z > 0.0) || !(spacing.y > 0.0) || !(spacing.x > 0.0))
        throw DataError("voxel spacing components must be > 0");
}

}  // namespace

Volume make_volume(Dims3 dims, Spacing3 spacing, IntensityKind kind,
                   std::variant<std::vector<std::int16_t>, std::vector<float>> data) {
    check_geometry(dims, spacing);
    const std::int64_t n = dims.count();
    const std::int64_t got = data.index() == 0
                                 ? static_cast<std::int64_t>(std::get<0>(data).size())
                                 : static_cast<std::int64_t>(std::get<1>(data).size());
    if (got != n)
        throw DataError("volume data length " + std::to_string(got) + " does not match dims product " +
                        std::to_string(n));
    if (kind == IntensityKind::Normalized) {
        if (data.index() != 1) throw DataError("normalized volumes must use float32 data");
        for (float v : std::get<1>(data))
            if (!(v >= 0.0f && v <= 1.0f))
                throw DataError("normalized intensity outside [0,1]: " + std::to_string(v));
    }
    return Volume{dims, spacing, kind, std::move(data)};
}

LabelMap make_labelmap(Dims3 dims, Spacing3 spacing, int num_classes, std::vector<std::uint16_t> labels) {
    check_geometry(dims, spacing);
    if (num_classes < 2) throw DataError("label map needs num_classes >= 2");
    if (static_cast<std::int64_t>(labels.size()) != dims.count())
        throw DataError("label data length does not match dims product");
    for (std::uint16_t l : labels)
        if (l >= num_classes)
            throw DataError("label " + std::to_string(l) + " out of range for num_classes " +
                            std::to_string(num_classes));
    return LabelMap{dims, spacing, num_classes, std::move(labels)};
}

ProbMap make_probmap(Dims3 dims, Spacing3 spacing, int num_classes, std::vector<float> probs) {
    check_geometry(dims, spacing);
    if (num_classes < 2) throw DataError("probability map needs num_classes >= 2");
    if (static_cast<std::int64_t>(probs.size()) != dims.count() * num_classes)
        throw DataError("probability data length does not match C*D*H*W");
    for (float p : probs)
        if (!(p >= 0.0f && p <= 1.0f)) throw DataError("probability outside [0,1]");
    return ProbMap{dims, spacing, num_classes, std::move(probs)};
}

Dims3 center_crop_offsets(Dims3 dims, Dims3 size) {
    return Dims3{(dims.d - size.d) / 2, (dims.h - size.h) / 2, (dims.w - size.w) / 2};
}

namespace {

void check_crop(const Dims3& dims, const Dims3& offset, const Dims3& size) {
    if (size.d < 1 || size.h < 1 || size.w < 1) throw DataError("crop size must be >= 1 per axis");
    if (offset.d < 0 || offset.h < 0 || offset.w < 0 || offset.d + size.d > dims.d ||
        offset.h + size.h > dims.h || offset.w + size.w > dims.w)
        throw DataError("crop box exceeds volume dims");
}

template <class T>
std::vector<T> crop_data(const std::vector<T>& src, Dims3 dims, Dims3 offset, Dims3 size) {
    std::vector<T> out;
    out.reserve(static_cast<std::size_t>(size.count()));
    for (std::int64_t z = 0; z < size.d; ++z)
        for (std::int64_t y = 0; y < size.h; ++y) {
            const std::int64_t base = linear_index(dims, offset.d + z, offset.h + y, offset.w);
            out.insert(out.end(), src.begin() + base, src.begin() + base + size.w);
        }
    return out;
}

}  // namespace

Volume crop_at(const Volume& v, Dims3 offset, Dims3 size) {
    check_crop(v.dims, offset, size);
    Volume out;
    out.dims = size;
    out.spacing_mm = v.spacing_mm;
    out.intensity_kind = v.intensity_kind;
    if (v.is_i16())
        out.data = crop_data(v.i16(), v.dims, offset, size);
    else
        out.data = crop_data(v.f32(), v.dims, offset, size);
    return out;
}

LabelMap crop_at(const LabelMap& g, Dims3 offset, Dims3 size) {
    check_crop(g.dims, offset, size);
    return LabelMap{size, g.spacing_mm, g.num_classes, crop_data(g.labels, g.dims, offset, size)};
}

Volume center_crop(const Volume& v, Dims3 size) { return crop_at(v, center_crop_offsets(v.dims, size), size); }

LabelMap center_crop(const LabelMap& g, Dims3 size) { return crop_at(g, center_crop_offsets(g.dims, size), size); }

std::pair<Volume, LabelMap> random_crop(const Volume& v, const LabelMap& g, Dims3 size, SplitMix64& rng) {
    if (v.dims != g.dims) throw DataError("random_crop: volume and label dims differ");
    check_crop(v.dims, Dims3{0, 0, 0}, size);
    // One draw per axis, in (z, y, x) order; keep this order stable, the
    // training loop's reproducibility depends on it.
    const Dims3 offset{
        static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(v.dims.d - size.d + 1))),
        static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(v.dims.h - size.h + 1))),
        static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(v.dims.w - size.w + 1)))};
    return {crop_at(v, offset, size), crop_at(g, offset, size)};
}

}  // namespace sepseg
