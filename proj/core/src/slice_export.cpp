#include "sepseg/slice_export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <vector>

#include "sepseg/error.hpp"

namespace sepseg {

namespace {

struct SliceView {
    std::int64_t rows = 0, cols = 0;
    std::function<double(std::int64_t r, std::int64_t c)> value;
};

SliceView slice_view(const Dims3& dims, int axis, std::int64_t index,
                     std::function<double(std::int64_t, std::int64_t, std::int64_t)> at) {
    const std::int64_t extent = axis == 0 ? dims.d : axis == 1 ? dims.h : dims.w;
    if (axis < 0 || axis > 2) throw ConfigError("slice axis must be 0 (z), 1 (y) or 2 (x)");
    if (index < 0 || index >= extent)
        throw DataError("slice index " + std::to_string(index) + " out of range for axis extent " +
                        std::to_string(extent));
    SliceView s;
    if (axis == 0) {
        s.rows = dims.h;
        s.cols = dims.w;
        s.value = [at, index](std::int64_t r, std::int64_t c) { return at(index, r, c); };
    } else if (axis == 1) {
        s.rows = dims.d;
        s.cols = dims.w;
        s.value = [at, index](std::int64_t r, std::int64_t c) { return at(r, index, c); };
    } else {
        s.rows = dims.d;
        s.cols = dims.h;
        s.value = [at, index](std::int64_t r, std::int64_t c) { return at(r, c, index); };
    }
    return s;
}

void write_pgm(const std::string& path, const SliceView& s, const std::function<int(double)>& to_gray) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open image for writing: " + path);
    out << "P5\n" << s.cols << " " << s.rows << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(s.cols));
    for (std::int64_t r = 0; r < s.rows; ++r) {
        for (std::int64_t c = 0; c < s.cols; ++c)
            row[static_cast<std::size_t>(c)] =
                static_cast<unsigned char>(std::clamp(to_gray(s.value(r, c)), 0, 255));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace

void export_slice_image(const Volume& v, int axis, std::int64_t index, const std::string& path) {
    auto at = [&v](std::int64_t z, std::int64_t y, std::int64_t x) {
        return v.value_at(linear_index(v.dims, z, y, x));
    };
    const SliceView s = slice_view(v.dims, axis, index, at);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::int64_t r = 0; r < s.rows; ++r)
        for (std::int64_t c = 0; c < s.cols; ++c) {
            const double x = s.value(r, c);
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    if (hi <= lo) {
        write_pgm(path, s, [](double) { return 128; });
        return;
    }
    const double scale = 255.0 / (hi - lo);
    write_pgm(path, s, [lo, scale](double x) { return static_cast<int>(std::lround((x - lo) * scale)); });
}

void export_slice_image(const LabelMap& g, int axis, std::int64_t index, const std::string& path) {
    auto at = [&g](std::int64_t z, std::int64_t y, std::int64_t x) {
        return static_cast<double>(g.labels[static_cast<std::size_t>(linear_index(g.dims, z, y, x))]);
    };
    const SliceView s = slice_view(g.dims, axis, index, at);
    const double denom = std::max(1, g.num_classes - 1);
    write_pgm(path, s, [denom](double v) { return static_cast<int>(std::lround(255.0 * v / denom)); });
}

void export_slice_image(const UncertaintyMap& u, int axis, std::int64_t index, const std::string& path) {
    auto at = [&u](std::int64_t z, std::int64_t y, std::int64_t x) {
        return u.entropy[static_cast<std::size_t>(linear_index(u.dims, z, y, x))];
    };
    const SliceView s = slice_view(u.dims, axis, index, at);
    const double denom = std::log(static_cast<double>(std::max(2, u.num_members)));
    write_pgm(path, s, [denom](double v) { return static_cast<int>(std::lround(255.0 * v / denom)); });
}

}  // namespace sepseg
