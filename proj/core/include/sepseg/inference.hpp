#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sepseg/network.hpp"
#include "sepseg/transform.hpp"
#include "sepseg/volume.hpp"

namespace sepseg {

struct PredictConfig {
    std::int64_t window_hw = 256;  // in-plane center window
    std::int64_t patch_depth = 16; // depth tile extent
};

// Whole-volume inference: intensity transform, in-plane center window
// (falling back to the whole extent for small volumes), depth-tiled forward
// passes with half-depth overlap and linear seam blending, softmax
// probabilities and argmax labels. Voxels outside the window get background
// probability 1. A volume that fits one tile reproduces the single forward
// pass exactly.
std::pair<ProbMap, LabelMap> predict(Model<float>& m, const Volume& v, const TransformSpec& t,
                                     const PredictConfig& cfg);

// Argmax over classes; ties resolve to the lower class index.
LabelMap argmax_labels(const ProbMap& p);

// Per-class rank weights: for each class, members are ordered by validation
// DSC descending (ties to the lower member index) and the i-th best gets
// rank_weights[i]; members beyond the list get weight 1. Result indexed
// [member][class].
std::vector<std::vector<double>> rank_members(const std::vector<std::vector<double>>& dsc_table,
                                              const std::vector<double>& rank_weights);

// Class-wise weighted average of member probability maps; weights indexed
// [member][class]. Channel sums of the result may deviate from 1 when the
// per-class weights differ; the final label is still the fused argmax.
ProbMap ensemble_fuse(const std::vector<ProbMap>& members,
                      const std::vector<std::vector<double>>& member_class_weights);

// Voxel-wise predictive entropy over the members' hard labels:
// H = -sum_m freq_m ln freq_m over the unique labels at each voxel.
UncertaintyMap entropy_map(const std::vector<LabelMap>& members);

// Structure-wise volume variation coefficient: population std / mean of the
// per-member physical volumes. All-zero volumes give 0 (absent structure).
double vvc(const std::vector<std::int64_t>& member_voxel_counts, const Spacing3& spacing);
double vvc_volumes(const std::vector<double>& volumes_mm3);

// Error-rate-per-uncertainty-level analysis of an ensemble against ground
// truth, over three regions: the whole grid, the predicted background and
// the predicted foreground (consensus label = plurality vote, ties to the
// lower label; a voxel is mis-segmented when consensus != gt).
struct LevelStats {
    double level = 0.0;  // entropy in nats
    std::int64_t count = 0;
    std::int64_t errors = 0;
    double error_rate = 0.0;
};

struct RegionStats {
    std::string region;
    std::vector<LevelStats> levels;              // ascending by level
    std::vector<double> missegmented_fractions;  // level distribution among errors
};

struct UncertaintyReport {
    std::vector<double> levels;  // ascending
    RegionStats whole, background, foreground;
};

UncertaintyReport uncertainty_report(const std::vector<LabelMap>& members, const LabelMap& gt);
std::string uncertainty_report_to_json(const UncertaintyReport& r);

// Ensemble run description: member checkpoints with their transforms, the
// validation DSC table (member x class) and the rank-weight list.
struct EnsembleMember {
    std::string checkpoint;
    std::string transform;  // preset name or JSON spec path
};

struct EnsembleSpec {
    std::vector<EnsembleMember> members;
    std::vector<std::vector<double>> dsc_table;
    std::vector<double> rank_weights{5, 4, 3, 1, 1, 1};
};

EnsembleSpec ensemble_spec_from_json(const std::string& json_text);
std::string ensemble_spec_to_json(const EnsembleSpec& spec);

struct EnsembleResult {
    ProbMap fused;
    LabelMap final_labels;
    std::vector<LabelMap> member_labels;
};

EnsembleResult run_ensemble(const EnsembleSpec& spec, const Volume& v, const PredictConfig& cfg);

}  // namespace sepseg
