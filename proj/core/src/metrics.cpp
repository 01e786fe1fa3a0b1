#include "sepseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "sepseg/error.hpp"

namespace sepseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_grid(const Mask& a, const Mask& b) {
    if (!(a.dims == b.dims) || !(a.spacing_mm == b.spacing_mm))
        throw DataError("surface distances require masks on the same grid");
}

bool is_boundary(const Mask& m, std::int64_t z, std::int64_t y, std::int64_t x) {
    if (!m.in[static_cast<std::size_t>(linear_index(m.dims, z, y, x))]) return false;
    if (z == 0 || z == m.dims.d - 1 || y == 0 || y == m.dims.h - 1 || x == 0 || x == m.dims.w - 1)
        return true;
    return !m.in[static_cast<std::size_t>(linear_index(m.dims, z - 1, y, x))] ||
           !m.in[static_cast<std::size_t>(linear_index(m.dims, z + 1, y, x))] ||
           !m.in[static_cast<std::size_t>(linear_index(m.dims, z, y - 1, x))] ||
           !m.in[static_cast<std::size_t>(linear_index(m.dims, z, y + 1, x))] ||
           !m.in[static_cast<std::size_t>(linear_index(m.dims, z, y, x - 1))] ||
           !m.in[static_cast<std::size_t>(linear_index(m.dims, z, y, x + 1))];
}

std::vector<std::int64_t> boundary_indices(const Mask& m) {
    std::vector<std::int64_t> idx;
    for (std::int64_t z = 0; z < m.dims.d; ++z)
        for (std::int64_t y = 0; y < m.dims.h; ++y)
            for (std::int64_t x = 0; x < m.dims.w; ++x)
                if (is_boundary(m, z, y, x)) idx.push_back(linear_index(m.dims, z, y, x));
    return idx;
}

// One pass of the exact 1D squared-distance transform under the squared
// Euclidean metric with sample positions i*s (lower envelope of parabolas).
void dt_1d(const double* f, double* d, std::int64_t n, double s, std::vector<std::int64_t>& v,
           std::vector<double>& z) {
    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        const double pq = static_cast<double>(q) * s;
        double x = 0.0;
        while (k >= 0) {
            const double pv = static_cast<double>(v[static_cast<std::size_t>(k)]) * s;
            const double fv = f[v[static_cast<std::size_t>(k)]];
            x = ((f[q] + pq * pq) - (fv + pv * pv)) / (2.0 * (pq - pv));
            if (x <= z[static_cast<std::size_t>(k)])
                --k;
            else
                break;
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
        } else {
            ++k;
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k)] = x;
            z[static_cast<std::size_t>(k) + 1] = kInf;
        }
    }
    if (k < 0) {
        std::fill_n(d, n, kInf);
        return;
    }
    std::int64_t j = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        const double pq = static_cast<double>(q) * s;
        while (z[static_cast<std::size_t>(j) + 1] < pq) ++j;
        const double pv = static_cast<double>(v[static_cast<std::size_t>(j)]) * s;
        d[q] = (pq - pv) * (pq - pv) + f[v[static_cast<std::size_t>(j)]];
    }
}

// Squared Euclidean distance (mm^2) from every voxel center to the nearest
// seed voxel center, exact under anisotropic spacing.
std::vector<double> squared_edt(const Dims3& dims, const Spacing3& sp,
                                const std::vector<std::int64_t>& seeds) {
    const std::int64_t D = dims.d, H = dims.h, W = dims.w;
    std::vector<double> g(static_cast<std::size_t>(dims.count()), kInf);
    for (auto i : seeds) g[static_cast<std::size_t>(i)] = 0.0;

    const std::int64_t max_extent = std::max({D, H, W});
    std::vector<double> f(static_cast<std::size_t>(max_extent));
    std::vector<double> d(static_cast<std::size_t>(max_extent));
    std::vector<std::int64_t> v(static_cast<std::size_t>(max_extent));
    std::vector<double> z(static_cast<std::size_t>(max_extent) + 1);

    // x pass
    for (std::int64_t zz = 0; zz < D; ++zz)
        for (std::int64_t yy = 0; yy < H; ++yy) {
            double* row = g.data() + (zz * H + yy) * W;
            dt_1d(row, d.data(), W, sp.x, v, z);
            std::copy_n(d.data(), W, row);
        }
    // y pass
    for (std::int64_t zz = 0; zz < D; ++zz)
        for (std::int64_t xx = 0; xx < W; ++xx) {
            for (std::int64_t yy = 0; yy < H; ++yy) f[static_cast<std::size_t>(yy)] = g[static_cast<std::size_t>((zz * H + yy) * W + xx)];
            dt_1d(f.data(), d.data(), H, sp.y, v, z);
            for (std::int64_t yy = 0; yy < H; ++yy) g[static_cast<std::size_t>((zz * H + yy) * W + xx)] = d[static_cast<std::size_t>(yy)];
        }
    // z pass
    for (std::int64_t yy = 0; yy < H; ++yy)
        for (std::int64_t xx = 0; xx < W; ++xx) {
            for (std::int64_t zz = 0; zz < D; ++zz) f[static_cast<std::size_t>(zz)] = g[static_cast<std::size_t>((zz * H + yy) * W + xx)];
            dt_1d(f.data(), d.data(), D, sp.z, v, z);
            for (std::int64_t zz = 0; zz < D; ++zz) g[static_cast<std::size_t>((zz * H + yy) * W + xx)] = d[static_cast<std::size_t>(zz)];
        }
    return g;
}

double nearest_rank_percentile(const std::vector<double>& sorted, double pct) {
    const std::size_t n = sorted.size();
    const std::size_t k = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
    return sorted[std::max<std::size_t>(1, k) - 1];
}

}  // namespace

Mask mask_of(const LabelMap& labels, int cls) {
    Mask m;
    m.dims = labels.dims;
    m.spacing_mm = labels.spacing_mm;
    m.in.resize(labels.labels.size());
    for (std::size_t i = 0; i < labels.labels.size(); ++i) m.in[i] = labels.labels[i] == cls ? 1 : 0;
    return m;
}

SurfaceSet surface(const Mask& mask) {
    SurfaceSet s;
    for (auto i : boundary_indices(mask)) {
        const std::int64_t z = i / (mask.dims.h * mask.dims.w);
        const std::int64_t y = (i / mask.dims.w) % mask.dims.h;
        const std::int64_t x = i % mask.dims.w;
        s.points_mm.push_back({static_cast<double>(z) * mask.spacing_mm.z,
                               static_cast<double>(y) * mask.spacing_mm.y,
                               static_cast<double>(x) * mask.spacing_mm.x});
    }
    return s;
}

double dsc(const Mask& pred, const Mask& gt) {
    if (pred.in.size() != gt.in.size()) throw DataError("dsc: mask sizes differ");
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.in.size(); ++i) {
        const bool p = pred.in[i] != 0, g = gt.in[i] != 0;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    if (tp + fp + fn == 0) return 1.0;  // both empty
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double dsc(const LabelMap& pred, const LabelMap& gt, int cls) {
    if (!(pred.dims == gt.dims)) throw DataError("dsc: label grids differ");
    return dsc(mask_of(pred, cls), mask_of(gt, cls));
}

std::pair<std::vector<double>, std::vector<double>> directed_surface_distances(const Mask& pred,
                                                                               const Mask& gt) {
    require_same_grid(pred, gt);
    const auto pb = boundary_indices(pred);
    const auto gb = boundary_indices(gt);
    if (pb.empty() || gb.empty())
        throw NumericError("undefined distance: empty mask has no boundary");

    const auto dt_gt = squared_edt(pred.dims, pred.spacing_mm, gb);
    const auto dt_pred = squared_edt(pred.dims, pred.spacing_mm, pb);

    std::vector<double> p2g, g2p;
    p2g.reserve(pb.size());
    g2p.reserve(gb.size());
    for (auto i : pb) p2g.push_back(std::sqrt(dt_gt[static_cast<std::size_t>(i)]));
    for (auto i : gb) g2p.push_back(std::sqrt(dt_pred[static_cast<std::size_t>(i)]));
    std::sort(p2g.begin(), p2g.end());
    std::sort(g2p.begin(), g2p.end());
    return {std::move(p2g), std::move(g2p)};
}

double hd95(const Mask& pred, const Mask& gt) {
    const auto [p2g, g2p] = directed_surface_distances(pred, gt);
    return std::max(nearest_rank_percentile(p2g, 95.0), nearest_rank_percentile(g2p, 95.0));
}

double assd(const Mask& pred, const Mask& gt) {
    const auto [p2g, g2p] = directed_surface_distances(pred, gt);
    // Per-direction sums first, so assd(a, b) == assd(b, a) bit-exactly.
    double sum_p = 0.0, sum_g = 0.0;
    for (double d : p2g) sum_p += d;
    for (double d : g2p) sum_g += d;
    return (sum_p + sum_g) / static_cast<double>(p2g.size() + g2p.size());
}

MetricsReport weighted_report(const std::vector<ClassMetrics>& per_class,
                              const std::vector<double>& weights,
                              const std::vector<std::string>& class_names) {
    if (per_class.size() != weights.size())
        throw ConfigError("weighted_report: one weight per class required");
    for (double w : weights)
        if (!(w > 0)) throw ConfigError("weighted_report: weights must be > 0");
    MetricsReport r;
    r.per_class = per_class;
    r.weights = weights;
    if (!class_names.empty()) {
        if (class_names.size() != per_class.size())
            throw ConfigError("weighted_report: one name per class required");
        r.class_names = class_names;
    } else {
        for (std::size_t i = 0; i < per_class.size(); ++i)
            r.class_names.push_back("class_" + std::to_string(i + 1));
    }

    double wsum = 0.0, dsc_acc = 0.0;
    double hd_w = 0.0, hd_acc = 0.0, as_w = 0.0, as_acc = 0.0;
    for (std::size_t i = 0; i < per_class.size(); ++i) {
        wsum += weights[i];
        dsc_acc += weights[i] * per_class[i].dsc;
        if (per_class[i].hd95_mm) {
            hd_w += weights[i];
            hd_acc += weights[i] * *per_class[i].hd95_mm;
        }
        if (per_class[i].assd_mm) {
            as_w += weights[i];
            as_acc += weights[i] * *per_class[i].assd_mm;
        }
    }
    r.weighted_dsc = dsc_acc / wsum;
    if (hd_w > 0) r.weighted_hd95 = hd_acc / hd_w;
    if (as_w > 0) r.weighted_assd = as_acc / as_w;
    return r;
}

MetricsReport evaluate_labelmaps(const LabelMap& pred, const LabelMap& gt,
                                 const std::vector<double>& weights) {
    if (!(pred.dims == gt.dims)) throw DataError("evaluate: label grids differ");
    if (!(pred.spacing_mm == gt.spacing_mm)) throw DataError("evaluate: label spacings differ");
    const int C = std::max(pred.num_classes, gt.num_classes);
    std::vector<ClassMetrics> per_class;
    for (int c = 1; c < C; ++c) {
        ClassMetrics cm;
        const Mask pm = mask_of(pred, c);
        const Mask gm = mask_of(gt, c);
        cm.dsc = dsc(pm, gm);
        if (pm.count() > 0 && gm.count() > 0) {
            cm.hd95_mm = hd95(pm, gm);
            cm.assd_mm = assd(pm, gm);
        }
        per_class.push_back(cm);
    }
    std::vector<double> w = weights;
    if (w.empty()) w.assign(per_class.size(), 1.0);
    if (w.size() != per_class.size())
        throw ConfigError("evaluate: expected " + std::to_string(per_class.size()) + " weights, got " +
                          std::to_string(w.size()));
    return weighted_report(per_class, w);
}

const std::vector<double>& structseg22_weights() {
    static const std::vector<double> w{100, 100, 50, 50, 80, 80, 50, 80, 100, 80, 80,
                                       100, 50, 50, 70, 70, 70, 70, 60, 60, 100, 100};
    return w;
}

const std::vector<std::string>& structseg22_names() {
    static const std::vector<std::string> names{
        "eye_l",           "eye_r",           "lens_l",        "lens_r",       "opt_nerve_l",
        "opt_nerve_r",     "opt_chiasma",     "pituitary",     "brain_stem",   "temporal_lobes_l",
        "temporal_lobes_r", "spinal_cord",    "parotid_l",     "parotid_r",    "inner_ear_l",
        "inner_ear_r",     "mid_ear_l",       "mid_ear_r",     "tm_joint_l",   "tm_joint_r",
        "mandible_l",      "mandible_r"};
    return names;
}

std::string metrics_report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["per_class"] = nlohmann::json::array();
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
        nlohmann::json c;
        c["name"] = r.class_names[i];
        c["weight"] = r.weights[i];
        c["dsc"] = r.per_class[i].dsc;
        c["hd95_mm"] = r.per_class[i].hd95_mm ? nlohmann::json(*r.per_class[i].hd95_mm)
                                              : nlohmann::json(nullptr);
        c["assd_mm"] = r.per_class[i].assd_mm ? nlohmann::json(*r.per_class[i].assd_mm)
                                              : nlohmann::json(nullptr);
        j["per_class"].push_back(c);
    }
    j["weighted"]["dsc"] = r.weighted_dsc;
    j["weighted"]["hd95_mm"] = r.weighted_hd95 ? nlohmann::json(*r.weighted_hd95) : nlohmann::json(nullptr);
    j["weighted"]["assd_mm"] = r.weighted_assd ? nlohmann::json(*r.weighted_assd) : nlohmann::json(nullptr);
    return j.dump(2) + "\n";
}

std::string metrics_report_to_table(const MetricsReport& r) {
    std::ostringstream out;
    std::size_t name_w = 8;
    for (const auto& n : r.class_names) name_w = std::max(name_w, n.size());
    auto num = [](std::optional<double> v) {
        if (!v) return std::string("undefined");
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << *v;
        return s.str();
    };
    out << std::left << std::setw(static_cast<int>(name_w) + 2) << "class" << std::right
        << std::setw(8) << "weight" << std::setw(10) << "DSC" << std::setw(12) << "HD95_mm"
        << std::setw(12) << "ASSD_mm" << "\n";
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
        out << std::left << std::setw(static_cast<int>(name_w) + 2) << r.class_names[i] << std::right
            << std::setw(8) << r.weights[i] << std::setw(10) << num(r.per_class[i].dsc)
            << std::setw(12) << num(r.per_class[i].hd95_mm) << std::setw(12)
            << num(r.per_class[i].assd_mm) << "\n";
    }
    out << std::left << std::setw(static_cast<int>(name_w) + 2) << "weighted" << std::right
        << std::setw(8) << "-" << std::setw(10) << num(r.weighted_dsc) << std::setw(12)
        << num(r.weighted_hd95) << std::setw(12) << num(r.weighted_assd) << "\n";
    return out.str();
}

}  // namespace sepseg
