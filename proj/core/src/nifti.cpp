#include "sepseg/nifti.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "sepseg/error.hpp"

namespace sepseg {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDtInt16 = 4;
constexpr int kDtFloat32 = 16;

std::int16_t le_i16(const unsigned char* p) {
    return static_cast<std::int16_t>(p[0] | (p[1] << 8));
}

std::uint32_t le_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float le_f32(const unsigned char* p) { return std::bit_cast<float>(le_u32(p)); }

}  // namespace

Volume import_nifti(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open NIfTI file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

    if (bytes.size() >= 2 && p[0] == 0x1f && p[1] == 0x8b)
        throw DataError("unsupported feature: gzip-compressed NIfTI (" + path + ")");
    if (bytes.size() < kHeaderSize)
        throw DataError("NIfTI file shorter than the 348-byte header: " + path);

    const std::uint32_t sizeof_hdr = le_u32(p + 0);
    if (sizeof_hdr != kHeaderSize) {
        if (sizeof_hdr == 0x5c010000u)  // 348 byte-swapped
            throw DataError("unsupported feature: big-endian NIfTI header (" + path + ")");
        throw DataError("not a NIfTI-1 file (sizeof_hdr != 348): " + path);
    }

    const char* magic = bytes.data() + 344;
    if (std::memcmp(magic, "ni1", 4 - 1) == 0 && magic[3] == '\0')
        throw DataError("unsupported feature: two-file NIfTI (.hdr/.img pair): " + path);
    if (!(std::memcmp(magic, "n+1", 3) == 0 && magic[3] == '\0'))
        throw DataError("missing NIfTI-1 magic \"n+1\": " + path);

    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i) dim[i] = le_i16(p + 40 + 2 * i);
    const int ndim = dim[0];
    if (ndim < 1 || ndim > 7) throw DataError("NIfTI dim[0] out of range: " + std::to_string(ndim));
    for (int i = 4; i <= ndim; ++i)
        if (dim[i] > 1)
            throw DataError("unsupported feature: NIfTI with more than 3 non-trivial dimensions: " + path);
    const std::int64_t nx = ndim >= 1 ? dim[1] : 1;
    const std::int64_t ny = ndim >= 2 ? dim[2] : 1;
    const std::int64_t nz = ndim >= 3 ? dim[3] : 1;
    if (nx < 1 || ny < 1 || nz < 1) throw DataError("NIfTI with non-positive grid extent: " + path);

    const std::int16_t datatype = le_i16(p + 70);
    if (datatype != kDtInt16 && datatype != kDtFloat32)
        throw DataError("unsupported feature: NIfTI datatype code " + std::to_string(datatype) +
                        " (only int16=4 and float32=16 are read): " + path);

    const float scl_slope = le_f32(p + 112);
    const float scl_inter = le_f32(p + 116);
    if (!((scl_slope == 0.0f || scl_slope == 1.0f) && scl_inter == 0.0f))
        throw DataError("unsupported feature: NIfTI intensity rescaling scl_slope/scl_inter: " + path);

    float pixdim[8];
    for (int i = 0; i < 8; ++i) pixdim[i] = le_f32(p + 76 + 4 * i);
    auto spacing_of = [&](int i, std::int64_t extent) -> double {
        if (extent == 1 && !(pixdim[i] > 0.0f)) return 1.0;  // degenerate axis, spacing irrelevant
        if (!(pixdim[i] > 0.0f))
            throw DataError("NIfTI pixdim[" + std::to_string(i) + "] must be > 0: " + path);
        return static_cast<double>(pixdim[i]);
    };
    const Spacing3 spacing{spacing_of(3, nz), spacing_of(2, ny), spacing_of(1, nx)};

    float vox_offset_f = le_f32(p + 108);
    std::int64_t vox_offset = static_cast<std::int64_t>(vox_offset_f);
    if (vox_offset < 352) vox_offset = 352;

    const std::int64_t count = nx * ny * nz;
    const int elem = datatype == kDtInt16 ? 2 : 4;
    if (static_cast<std::int64_t>(bytes.size()) < vox_offset + count * elem)
        throw DataError("NIfTI data truncated: expected " + std::to_string(count * elem) +
                        " data bytes at offset " + std::to_string(vox_offset) + ": " + path);

    // NIfTI stores x fastest, then y, then z; that is already our (D,H,W)
    // row-major layout, so the linear order carries over unchanged.
    const Dims3 dims{nz, ny, nx};
    const auto* data = p + vox_offset;
    if (datatype == kDtInt16) {
        std::vector<std::int16_t> v(static_cast<std::size_t>(count));
        for (std::int64_t i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = le_i16(data + 2 * i);
        return make_volume(dims, spacing, IntensityKind::HU, std::move(v));
    }
    std::vector<float> v(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = le_f32(data + 4 * i);
    return make_volume(dims, spacing, IntensityKind::HU, std::move(v));
}

}  // namespace sepseg
