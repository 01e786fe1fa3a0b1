#pragma once

#include <string>

#include "sepseg/volume.hpp"

namespace sepseg {

// axis 0 = z (axial slice, H x W image), 1 = y (D x W), 2 = x (D x H).

// Writes one slice as binary 8-bit PGM (P5). Volumes are min-max scaled per
// slice; a constant slice maps to mid-gray 128 so the scaling never divides
// by zero. Labels and uncertainty maps use fixed per-level gray bins:
// round(255 * label / (C-1)) and round(255 * H / ln(N)) respectively, so the
// same value always gets the same gray across exports.
void export_slice_image(const Volume& v, int axis, std::int64_t index, const std::string& path);
void export_slice_image(const LabelMap& g, int axis, std::int64_t index, const std::string& path);
void export_slice_image(const UncertaintyMap& u, int axis, std::int64_t index, const std::string& path);

}  // namespace sepseg
