#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sepseg/volume.hpp"

namespace sepseg {

// One ellipsoidal structure of a synthetic phantom. Geometry is physical
// (mm), so anisotropic grids produce correspondingly flattened voxel masks.
struct PhantomStructure {
    int class_id = 1;
    double center_mm[3] = {0, 0, 0};  // (z, y, x)
    double radii_mm[3] = {1, 1, 1};   // (z, y, x), all > 0
    double mean_hu = 0.0;
    double noise_sigma_hu = 0.0;
};

struct PhantomSpec {
    Dims3 dims;
    Spacing3 spacing_mm;
    std::vector<PhantomStructure> structures;  // class ids dense in 1..C-1
    double background_hu = -1000.0;
    std::uint64_t seed = 0;
};

// Rasterizes the spec onto the grid. Voxels inside structure i get class i
// and HU = mean + gaussian(sigma), later structures overwriting earlier
// ones; everything else is the (noise-free) background. HU values are
// rounded and clamped to [-1000, 3000]. Deterministic for a fixed seed; each
// structure draws from its own split of the seed, so editing one structure
// leaves the noise of the others untouched.
std::pair<Volume, LabelMap> generate_phantom(const PhantomSpec& spec);

// Number of classes implied by the spec (max class id + 1, at least 2).
int phantom_num_classes(const PhantomSpec& spec);

// A small family of ready-made phantom specs used by the CLI and the test
// harness: one large, one medium and one small low-contrast structure, with
// centers/radii jittered per case index so a generated cohort has variety.
PhantomSpec default_phantom_spec(Dims3 dims, Spacing3 spacing, std::uint64_t seed, int case_index);

std::string phantom_spec_to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const std::string& json_text);

}  // namespace sepseg
