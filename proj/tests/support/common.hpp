#pragma once

#include <unistd.h>

#include <atomic>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

// Shared helpers for the test binaries. Everything here is test-only and
// deliberately independent of the library's own serialization code paths.
namespace testsupport {

class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        const auto base = std::filesystem::temp_directory_path();
        path_ = base / ("sepseg_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void put_u16le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32le(std::string& out, float v) {
    std::uint32_t u;
    static_assert(sizeof(u) == sizeof(v));
    std::memcpy(&u, &v, 4);
    put_u32le(out, u);
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Hand-rolled NIfTI-1 header writer, independent of the importer under test.
inline std::string make_nifti_bytes(std::int16_t nx, std::int16_t ny, std::int16_t nz,
                                    std::int16_t datatype, float dx, float dy, float dz,
                                    const std::string& payload) {
    std::string h(348, '\0');
    auto set_u32 = [&](int off, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) h[off + i] = static_cast<char>((v >> (8 * i)) & 0xff);
    };
    auto set_i16 = [&](int off, std::int16_t v) {
        h[off] = static_cast<char>(v & 0xff);
        h[off + 1] = static_cast<char>((v >> 8) & 0xff);
    };
    auto set_f32 = [&](int off, float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        set_u32(off, u);
    };
    set_u32(0, 348);
    set_i16(40, 3);  // dim[0]
    set_i16(42, nx);
    set_i16(44, ny);
    set_i16(46, nz);
    for (int i = 4; i < 8; ++i) set_i16(40 + 2 * i, 1);
    set_i16(70, datatype);
    set_i16(72, datatype == 4 ? 16 : 32);  // bitpix
    set_f32(76, 1.0f);                     // pixdim[0] (qfac)
    set_f32(80, dx);
    set_f32(84, dy);
    set_f32(88, dz);
    set_f32(108, 352.0f);  // vox_offset
    set_f32(112, 1.0f);    // scl_slope
    set_f32(116, 0.0f);    // scl_inter
    h[344] = 'n';
    h[345] = '+';
    h[346] = '1';
    h[347] = '\0';
    return h + std::string(4, '\0') + payload;  // 4-byte extender then data
}

struct PgmImage {
    int width = 0, height = 0;
    std::vector<unsigned char> pixels;
    unsigned char at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
};

inline PgmImage read_pgm(const std::string& path) {
    const std::string bytes = read_bytes(path);
    PgmImage img;
    // "P5\n<w> <h>\n255\n" then raw rows.
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    if (token() != "P5") return img;
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    const int maxval = std::stoi(token());
    (void)maxval;
    ++pos;  // single whitespace after maxval
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return img;
}

}  // namespace testsupport
