#pragma once

#include <string>
#include <vector>

#include "sepseg/volume.hpp"

namespace sepseg {

// Monotone piecewise-linear HU -> [0,1] intensity mapping defined by K
// anchors (h_i, x_i). Two-anchor specs are the classic window/level
// transform; CT windowing with several segments keeps soft tissue and bone
// visible at the same time.
struct TransformSpec {
    std::vector<double> hs;  // strictly increasing HU anchors
    std::vector<double> xs;  // non-decreasing, xs.front()==0, xs.back()==1
};

// Validate and build. Throws ConfigError for non-monotone anchors, K < 2,
// or xs outside [0,1] / endpoints not 0 and 1.
TransformSpec make_slf(const std::vector<double>& xs, const std::vector<double>& hs);
TransformSpec make_nlf(double h1, double h2);  // K=2 case with xs = [0, 1]

// Built-in anchor sets. SLF1-3 share xs = [0, 0.2, 0.8, 1.0] with hs
// [-500,-200,200,1500], [-500,-100,100,1500], [-500,-100,400,1500];
// NLF1 = [-100,100], NLF2 = [-500,800]. Unknown names throw ConfigError.
TransformSpec transform_preset(const std::string& name);
const std::vector<std::string>& transform_preset_names();

// Evaluate the mapping at one HU value: 0 for h <= h_1, 1 for h > h_K, and
// linear interpolation between the surrounding anchors otherwise.
double apply_transform_scalar(const TransformSpec& t, double h);

// Apply voxel-wise to an HU volume; the result is a Normalized float32
// volume with identical geometry. Throws ConfigError if v is already
// normalized.
Volume apply_transform(const Volume& v, const TransformSpec& t);

// {"xs":[...],"hs":[...]} round-trip.
std::string transform_to_json(const TransformSpec& t);
TransformSpec transform_from_json(const std::string& json_text);

// Resolve either a preset name or a path to a JSON spec file.
TransformSpec resolve_transform(const std::string& name_or_path);

}  // namespace sepseg
