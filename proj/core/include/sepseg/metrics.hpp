#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sepseg/volume.hpp"

namespace sepseg {

// Binary mask over a voxel grid with physical spacing.
struct Mask {
    Dims3 dims;
    Spacing3 spacing_mm;
    std::vector<std::uint8_t> in;

    std::int64_t count() const {
        std::int64_t n = 0;
        for (auto v : in) n += v != 0;
        return n;
    }
};

Mask mask_of(const LabelMap& labels, int cls);

// Boundary voxel centers in physical mm: mask voxels with at least one
// six-connected neighbor outside the mask or lying on the volume border.
struct SurfaceSet {
    std::vector<std::array<double, 3>> points_mm;  // (z, y, x)
};

SurfaceSet surface(const Mask& mask);

// Overlap 2TP / (2TP + FP + FN) for one class; 1.0 when both masks are
// empty, 0.0 when exactly one is.
double dsc(const LabelMap& pred, const LabelMap& gt, int cls);
double dsc(const Mask& pred, const Mask& gt);

// Symmetric 95th-percentile Hausdorff surface distance in mm (nearest-rank
// percentile per direction, max of the two directions). Throws NumericError
// if either mask is empty.
double hd95(const Mask& pred, const Mask& gt);

// Average symmetric surface distance: mean of all directed boundary-point
// distances pooled over both directions.
double assd(const Mask& pred, const Mask& gt);

// Both directed distance multisets (pred->gt, gt->pred), sorted ascending.
// Computed with a separable exact Euclidean distance transform over the
// anisotropic grid; the brute-force pairwise oracle in the tests must agree
// to 1e-9.
std::pair<std::vector<double>, std::vector<double>> directed_surface_distances(const Mask& pred,
                                                                               const Mask& gt);

struct ClassMetrics {
    double dsc = 0.0;
    std::optional<double> hd95_mm;  // absent = undefined (an empty mask)
    std::optional<double> assd_mm;
};

struct MetricsReport {
    std::vector<std::string> class_names;  // size C-1 (foreground classes)
    std::vector<ClassMetrics> per_class;
    std::vector<double> weights;
    double weighted_dsc = 0.0;
    std::optional<double> weighted_hd95;  // over classes where defined
    std::optional<double> weighted_assd;
};

// Importance-weighted averages; distances average over the classes where
// they are defined, re-normalizing the weights.
MetricsReport weighted_report(const std::vector<ClassMetrics>& per_class,
                              const std::vector<double>& weights,
                              const std::vector<std::string>& class_names = {});

// Full per-class evaluation of a prediction against ground truth
// (foreground classes 1..C-1) plus the weighted aggregate.
MetricsReport evaluate_labelmaps(const LabelMap& pred, const LabelMap& gt,
                                 const std::vector<double>& weights);

// The 22-entry head-and-neck importance weights (sum 1650), in the standard
// structure order, available as a named preset.
const std::vector<double>& structseg22_weights();
const std::vector<std::string>& structseg22_names();

std::string metrics_report_to_json(const MetricsReport& r);
std::string metrics_report_to_table(const MetricsReport& r);

}  // namespace sepseg
