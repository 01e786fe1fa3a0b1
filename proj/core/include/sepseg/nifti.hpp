#pragma once

#include <string>

#include "sepseg/volume.hpp"

namespace sepseg {

// Reads a single-file uncompressed NIfTI-1 volume (.nii) with datatype
// int16 or float32. Spacing comes from pixdim[1..3]; the grid is exposed as
// (D,H,W) with x fastest, exactly the file order. Everything outside this
// subset (gzip, two-file pairs, other datatypes, intensity rescaling,
// big-endian headers) raises a DataError naming the unsupported feature;
// guessing an orientation silently is worse than refusing.
Volume import_nifti(const std::string& path);

}  // namespace sepseg
