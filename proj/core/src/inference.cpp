#include "sepseg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "sepseg/checkpoint.hpp"
#include "sepseg/trainer.hpp"

namespace sepseg {

namespace {

std::vector<std::int64_t> tile_starts(std::int64_t depth, std::int64_t tile) {
    std::vector<std::int64_t> starts;
    if (depth <= tile) {
        starts.push_back(0);
        return starts;
    }
    const std::int64_t stride = std::max<std::int64_t>(1, tile / 2);
    for (std::int64_t s = 0;; s += stride) {
        if (s + tile >= depth) {
            starts.push_back(depth - tile);
            break;
        }
        starts.push_back(s);
    }
    return starts;
}

}  // namespace

std::pair<ProbMap, LabelMap> predict(Model<float>& m, const Volume& v, const TransformSpec& t,
                                     const PredictConfig& cfg) {
    if (cfg.window_hw < 1 || cfg.patch_depth < 1) throw ConfigError("predict: window and depth must be >= 1");
    const Volume norm = apply_transform(v, t);
    const std::int64_t divisor = std::int64_t(1) << (m.spec.num_scales - 1);
    const Dims3 win = windowed_dims(v.dims, cfg.window_hw, divisor);
    const Dims3 off = center_crop_offsets(v.dims, win);
    const Volume wv = crop_at(norm, off, win);
    const auto& values = wv.f32();

    const int C = m.spec.num_classes;
    const std::int64_t tile = std::min(cfg.patch_depth, win.d);
    const std::int64_t plane = win.h * win.w;

    std::vector<double> acc(static_cast<std::size_t>(C * win.count()), 0.0);
    std::vector<double> wsum(static_cast<std::size_t>(win.d), 0.0);

    for (const std::int64_t start : tile_starts(win.d, tile)) {
        Tensor<float> x = Tensor<float>::zeros({1, 1, tile, win.h, win.w});
        std::copy_n(values.data() + start * plane, tile * plane, x.data.data());
        const Tensor<float> probs = model_forward(m, x);
        m.tape.reset();
        for (std::int64_t zi = 0; zi < tile; ++zi) {
            // Linear seam blend: weight ramps toward the tile center.
            const double w = static_cast<double>(std::min(zi + 1, tile - zi));
            wsum[static_cast<std::size_t>(start + zi)] += w;
            for (int c = 0; c < C; ++c) {
                const float* src = probs.data.data() + (c * tile + zi) * plane;
                double* dst = acc.data() + (c * win.d + start + zi) * plane;
                for (std::int64_t i = 0; i < plane; ++i) dst[i] += w * static_cast<double>(src[i]);
            }
        }
    }

    // Full-extent probability map: background 1 outside the window.
    std::vector<float> probs(static_cast<std::size_t>(C) * static_cast<std::size_t>(v.dims.count()), 0.0f);
    for (std::int64_t i = 0; i < v.dims.count(); ++i) probs[static_cast<std::size_t>(i)] = 1.0f;
    for (std::int64_t z = 0; z < win.d; ++z) {
        const double wz = wsum[static_cast<std::size_t>(z)];
        for (std::int64_t y = 0; y < win.h; ++y)
            for (std::int64_t x = 0; x < win.w; ++x) {
                const std::int64_t src = (z * win.h + y) * win.w + x;
                const std::int64_t dst = linear_index(v.dims, z + off.d, y + off.h, x + off.w);
                for (int c = 0; c < C; ++c) {
                    const double p = acc[static_cast<std::size_t>(c * win.count() + src)] / wz;
                    probs[static_cast<std::size_t>(c) * static_cast<std::size_t>(v.dims.count()) +
                          static_cast<std::size_t>(dst)] =
                        static_cast<float>(std::min(1.0, std::max(0.0, p)));
                }
            }
    }
    ProbMap out = make_probmap(v.dims, v.spacing_mm, C, std::move(probs));
    LabelMap labels = argmax_labels(out);
    return {std::move(out), std::move(labels)};
}

LabelMap argmax_labels(const ProbMap& p) {
    const std::int64_t n = p.voxel_count();
    std::vector<std::uint16_t> labels(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        float best = p.probs[static_cast<std::size_t>(i)];
        int best_c = 0;
        for (int c = 1; c < p.num_classes; ++c) {
            const float v = p.probs[static_cast<std::size_t>(c) * static_cast<std::size_t>(n) +
                                    static_cast<std::size_t>(i)];
            if (v > best) {  // strict: ties stay with the lower class
                best = v;
                best_c = c;
            }
        }
        labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(best_c);
    }
    return make_labelmap(p.dims, p.spacing_mm, p.num_classes, std::move(labels));
}

std::vector<std::vector<double>> rank_members(const std::vector<std::vector<double>>& dsc_table,
                                              const std::vector<double>& rank_weights) {
    if (dsc_table.empty()) throw ConfigError("rank_members: empty DSC table");
    const std::size_t members = dsc_table.size();
    const std::size_t classes = dsc_table[0].size();
    for (const auto& row : dsc_table)
        if (row.size() != classes) throw ConfigError("rank_members: ragged DSC table");
    for (double w : rank_weights)
        if (!(w > 0)) throw ConfigError("rank_members: rank weights must be > 0");

    std::vector<std::vector<double>> w(members, std::vector<double>(classes, 1.0));
    std::vector<std::size_t> order(members);
    for (std::size_t c = 0; c < classes; ++c) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return dsc_table[a][c] > dsc_table[b][c];  // ties keep the lower member index first
        });
        for (std::size_t rank = 0; rank < members; ++rank)
            w[order[rank]][c] = rank < rank_weights.size() ? rank_weights[rank] : 1.0;
    }
    return w;
}

ProbMap ensemble_fuse(const std::vector<ProbMap>& members,
                      const std::vector<std::vector<double>>& member_class_weights) {
    if (members.empty()) throw ConfigError("ensemble_fuse: no members");
    if (member_class_weights.size() != members.size())
        throw ConfigError("ensemble_fuse: one weight row per member required");
    const ProbMap& first = members[0];
    for (const auto& m : members)
        if (!(m.dims == first.dims) || m.num_classes != first.num_classes ||
            !(m.spacing_mm == first.spacing_mm))
            throw DataError("ensemble_fuse: member geometry mismatch");
    const std::int64_t n = first.voxel_count();
    const int C = first.num_classes;

    std::vector<float> fused(static_cast<std::size_t>(C) * static_cast<std::size_t>(n), 0.0f);
    for (int c = 0; c < C; ++c) {
        double wsum = 0.0;
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (member_class_weights[i].size() != static_cast<std::size_t>(C))
                throw ConfigError("ensemble_fuse: weight row length must equal the class count");
            wsum += member_class_weights[i][static_cast<std::size_t>(c)];
        }
        if (!(wsum > 0)) throw ConfigError("ensemble_fuse: class weight sum must be > 0");
        for (std::int64_t v = 0; v < n; ++v) {
            double acc = 0.0;
            for (std::size_t i = 0; i < members.size(); ++i)
                acc += member_class_weights[i][static_cast<std::size_t>(c)] *
                       static_cast<double>(members[i].at(c, v));
            fused[static_cast<std::size_t>(c) * static_cast<std::size_t>(n) +
                  static_cast<std::size_t>(v)] = static_cast<float>(acc / wsum);
        }
    }
    return make_probmap(first.dims, first.spacing_mm, C, std::move(fused));
}

UncertaintyMap entropy_map(const std::vector<LabelMap>& members) {
    if (members.empty()) throw ConfigError("entropy_map: no members");
    const LabelMap& first = members[0];
    for (const auto& m : members)
        if (!(m.dims == first.dims)) throw DataError("entropy_map: member grids differ");
    const std::int64_t n = first.voxel_count();
    const int N = static_cast<int>(members.size());

    UncertaintyMap u{first.dims, first.spacing_mm, N, std::vector<double>(static_cast<std::size_t>(n), 0.0)};
    std::vector<std::uint16_t> votes(static_cast<std::size_t>(N));
    std::vector<int> counts;
    for (std::int64_t i = 0; i < n; ++i) {
        for (int m = 0; m < N; ++m)
            votes[static_cast<std::size_t>(m)] = members[static_cast<std::size_t>(m)].labels[static_cast<std::size_t>(i)];
        std::sort(votes.begin(), votes.end());
        counts.clear();
        int run = 1;
        for (int m = 1; m < N; ++m) {
            if (votes[static_cast<std::size_t>(m)] == votes[static_cast<std::size_t>(m - 1)]) {
                ++run;
            } else {
                counts.push_back(run);
                run = 1;
            }
        }
        counts.push_back(run);
        // Summing in descending count order keeps equal partitions bit-equal
        // no matter which labels realize them.
        std::sort(counts.begin(), counts.end(), std::greater<int>());
        double h = 0.0;
        for (int k : counts) {
            const double f = static_cast<double>(k) / static_cast<double>(N);
            h -= f * std::log(f);
        }
        u.entropy[static_cast<std::size_t>(i)] = h;
    }
    return u;
}

double vvc_volumes(const std::vector<double>& volumes_mm3) {
    if (volumes_mm3.empty()) throw ConfigError("vvc: no member volumes");
    double mean = 0.0;
    for (double v : volumes_mm3) {
        if (v < 0) throw ConfigError("vvc: volumes must be >= 0");
        mean += v;
    }
    mean /= static_cast<double>(volumes_mm3.size());
    if (mean == 0.0) {
        for (double v : volumes_mm3)
            if (v != 0.0) throw NumericError("vvc: zero mean with non-zero member volumes");
        return 0.0;  // structure absent in every member
    }
    double var = 0.0;
    for (double v : volumes_mm3) var += (v - mean) * (v - mean);
    var /= static_cast<double>(volumes_mm3.size());  // population variance
    return std::sqrt(var) / mean;
}

double vvc(const std::vector<std::int64_t>& member_voxel_counts, const Spacing3& spacing) {
    std::vector<double> volumes;
    volumes.reserve(member_voxel_counts.size());
    for (auto c : member_voxel_counts)
        volumes.push_back(static_cast<double>(c) * spacing.voxel_volume_mm3());
    return vvc_volumes(volumes);
}

namespace {

RegionStats region_stats(const std::string& name, const std::vector<double>& entropy,
                         const std::vector<double>& levels, const std::vector<std::uint8_t>& in_region,
                         const std::vector<std::uint8_t>& error) {
    RegionStats r;
    r.region = name;
    for (double lv : levels) r.levels.push_back(LevelStats{lv, 0, 0, 0.0});
    auto level_index = [&](double h) {
        for (std::size_t k = 0; k < levels.size(); ++k)
            if (h == levels[k]) return k;
        // Defensive: bucket to the nearest level (identical arithmetic should
        // make this unreachable).
        std::size_t best = 0;
        double bd = std::abs(h - levels[0]);
        for (std::size_t k = 1; k < levels.size(); ++k) {
            const double d = std::abs(h - levels[k]);
            if (d < bd) {
                bd = d;
                best = k;
            }
        }
        return best;
    };
    std::int64_t total_errors = 0;
    for (std::size_t i = 0; i < entropy.size(); ++i) {
        if (!in_region[i]) continue;
        LevelStats& ls = r.levels[level_index(entropy[i])];
        ls.count += 1;
        if (error[i]) {
            ls.errors += 1;
            ++total_errors;
        }
    }
    for (auto& ls : r.levels)
        ls.error_rate = ls.count > 0 ? static_cast<double>(ls.errors) / static_cast<double>(ls.count) : 0.0;
    r.missegmented_fractions.resize(levels.size(), 0.0);
    if (total_errors > 0)
        for (std::size_t k = 0; k < levels.size(); ++k)
            r.missegmented_fractions[k] =
                static_cast<double>(r.levels[k].errors) / static_cast<double>(total_errors);
    return r;
}

}  // namespace

UncertaintyReport uncertainty_report(const std::vector<LabelMap>& members, const LabelMap& gt) {
    if (members.empty()) throw ConfigError("uncertainty_report: no members");
    for (const auto& m : members)
        if (!(m.dims == gt.dims)) throw DataError("uncertainty_report: grids differ");
    const UncertaintyMap u = entropy_map(members);
    const std::int64_t n = gt.voxel_count();
    const int N = static_cast<int>(members.size());

    // Consensus = plurality vote, ties to the lower label.
    std::vector<std::uint16_t> consensus(static_cast<std::size_t>(n), 0);
    std::vector<int> count_by_label;
    for (std::int64_t i = 0; i < n; ++i) {
        count_by_label.assign(static_cast<std::size_t>(gt.num_classes), 0);
        int max_label = 0;
        for (int m = 0; m < N; ++m) {
            const int l = members[static_cast<std::size_t>(m)].labels[static_cast<std::size_t>(i)];
            if (l >= static_cast<int>(count_by_label.size())) count_by_label.resize(static_cast<std::size_t>(l) + 1, 0);
            count_by_label[static_cast<std::size_t>(l)] += 1;
            max_label = std::max(max_label, l);
        }
        int best = 0, best_count = count_by_label[0];
        for (int l = 1; l <= max_label; ++l)
            if (count_by_label[static_cast<std::size_t>(l)] > best_count) {
                best = l;
                best_count = count_by_label[static_cast<std::size_t>(l)];
            }
        consensus[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(best);
    }

    std::vector<double> levels = u.entropy;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    std::vector<std::uint8_t> error(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> whole(static_cast<std::size_t>(n), 1);
    std::vector<std::uint8_t> bg(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> fg(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        error[static_cast<std::size_t>(i)] =
            consensus[static_cast<std::size_t>(i)] != gt.labels[static_cast<std::size_t>(i)];
        bg[static_cast<std::size_t>(i)] = consensus[static_cast<std::size_t>(i)] == 0;
        fg[static_cast<std::size_t>(i)] = consensus[static_cast<std::size_t>(i)] != 0;
    }

    UncertaintyReport rep;
    rep.levels = levels;
    rep.whole = region_stats("whole", u.entropy, levels, whole, error);
    rep.background = region_stats("predicted_background", u.entropy, levels, bg, error);
    rep.foreground = region_stats("predicted_foreground", u.entropy, levels, fg, error);
    return rep;
}

std::string uncertainty_report_to_json(const UncertaintyReport& r) {
    nlohmann::json j;
    j["levels"] = r.levels;
    auto region = [](const RegionStats& s) {
        nlohmann::json rj;
        rj["region"] = s.region;
        rj["levels"] = nlohmann::json::array();
        for (const auto& ls : s.levels) {
            nlohmann::json lj;
            lj["level"] = ls.level;
            lj["count"] = ls.count;
            lj["errors"] = ls.errors;
            lj["error_rate"] = ls.error_rate;
            rj["levels"].push_back(lj);
        }
        rj["missegmented_fractions"] = s.missegmented_fractions;
        return rj;
    };
    j["whole"] = region(r.whole);
    j["predicted_background"] = region(r.background);
    j["predicted_foreground"] = region(r.foreground);
    return j.dump(2) + "\n";
}

EnsembleSpec ensemble_spec_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid ensemble spec JSON: ") + e.what());
    }
    EnsembleSpec s;
    if (!j.contains("members") || !j["members"].is_array() || j["members"].empty())
        throw ConfigError("ensemble spec needs a non-empty \"members\" array");
    for (const auto& m : j["members"]) {
        EnsembleMember em;
        em.checkpoint = m.at("checkpoint").get<std::string>();
        em.transform = m.at("transform").get<std::string>();
        s.members.push_back(em);
    }
    if (j.contains("dsc_table")) s.dsc_table = j["dsc_table"].get<std::vector<std::vector<double>>>();
    if (j.contains("rank_weights")) s.rank_weights = j["rank_weights"].get<std::vector<double>>();
    for (double w : s.rank_weights)
        if (!(w > 0)) throw ConfigError("ensemble spec: rank weights must be > 0");
    if (!s.dsc_table.empty() && s.dsc_table.size() != s.members.size())
        throw ConfigError("ensemble spec: dsc_table needs one row per member");
    return s;
}

std::string ensemble_spec_to_json(const EnsembleSpec& spec) {
    nlohmann::json j;
    j["members"] = nlohmann::json::array();
    for (const auto& m : spec.members)
        j["members"].push_back({{"checkpoint", m.checkpoint}, {"transform", m.transform}});
    j["dsc_table"] = spec.dsc_table;
    j["rank_weights"] = spec.rank_weights;
    return j.dump(2) + "\n";
}

EnsembleResult run_ensemble(const EnsembleSpec& spec, const Volume& v, const PredictConfig& cfg) {
    if (spec.members.empty()) throw ConfigError("run_ensemble: no members");
    std::vector<ProbMap> probs;
    EnsembleResult result;
    for (const auto& member : spec.members) {
        Model<float> m = load_checkpoint(member.checkpoint);
        auto [p, l] = predict(m, v, resolve_transform(member.transform), cfg);
        probs.push_back(std::move(p));
        result.member_labels.push_back(std::move(l));
    }
    std::vector<std::vector<double>> table = spec.dsc_table;
    if (table.empty()) {
        // No validation table: every member ranks equal, weights all 1.
        table.assign(spec.members.size(), std::vector<double>(static_cast<std::size_t>(probs[0].num_classes), 1.0));
    }
    if (!table.empty() && table[0].size() != static_cast<std::size_t>(probs[0].num_classes))
        throw ConfigError("run_ensemble: dsc_table columns must equal the class count");
    const auto weights = rank_members(table, spec.rank_weights);
    result.fused = ensemble_fuse(probs, weights);
    result.final_labels = argmax_labels(result.fused);
    return result;
}

}  // namespace sepseg
