#pragma once

#include <string>

#include "sepseg/volume.hpp"

namespace sepseg {

// Native on-disk formats. Each grid is a JSON sidecar plus a raw
// little-endian voxel file next to it (x index fastest):
//
//   foo.vol.json  {"dims":[D,H,W],"spacing_mm":[sz,sy,sx],
//                  "dtype":"i16"|"f32","intensity_kind":"HU"|"Normalized"}
//   foo.vol       raw voxels
//
//   foo.lab.json  {"dims":...,"spacing_mm":...,"dtype":"u16","num_classes":C}
//   foo.lab       raw labels (uint16)
//
//   foo.prob.json {"dims":...,"spacing_mm":...,"dtype":"f32","num_classes":C}
//   foo.prob      raw probabilities, class-major (C,D,H,W)
//
//   foo.unc.json  {"dims":...,"spacing_mm":...,"dtype":"f32","num_members":N}
//   foo.unc       raw entropies in nats
//
// The raw path is always the sidecar path minus its trailing ".json".
// save followed by load is bit-exact for every format and dtype.

Volume load_volume(const std::string& meta_path);
void save_volume(const Volume& v, const std::string& meta_path);

LabelMap load_labelmap(const std::string& meta_path);
void save_labelmap(const LabelMap& g, const std::string& meta_path);

ProbMap load_probmap(const std::string& meta_path);
void save_probmap(const ProbMap& p, const std::string& meta_path);

UncertaintyMap load_uncertainty(const std::string& meta_path);
void save_uncertainty(const UncertaintyMap& u, const std::string& meta_path);

// Strips the trailing ".json"; throws ConfigError if it is not there.
std::string raw_path_for(const std::string& meta_path);

}  // namespace sepseg
