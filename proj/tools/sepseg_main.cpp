// Command-line front end for the segmentation toolkit. One binary with
// subcommands covering the whole pipeline: synthesize phantoms, transform
// intensities, train, predict, ensemble, estimate uncertainty, evaluate,
// export slice images, and count parameters. See README for a walkthrough.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sepseg/checkpoint.hpp"
#include "sepseg/error.hpp"
#include "sepseg/inference.hpp"
#include "sepseg/kernels.hpp"
#include "sepseg/metrics.hpp"
#include "sepseg/network.hpp"
#include "sepseg/nifti.hpp"
#include "sepseg/phantom.hpp"
#include "sepseg/slice_export.hpp"
#include "sepseg/trainer.hpp"
#include "sepseg/transform.hpp"
#include "sepseg/volume_io.hpp"

namespace {

using nlohmann::json;
using namespace sepseg;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << text;
}

Volume load_any_volume(const std::string& path) {
    if (path.ends_with(".nii")) return import_nifti(path);
    return load_volume(path);
}

Dims3 parse_dims(const std::string& s, const char* what) {
    Dims3 d;
    if (std::sscanf(s.c_str(), "%ld,%ld,%ld", &d.d, &d.h, &d.w) != 3)
        throw ConfigError(std::string(what) + " must be three comma-separated integers z,y,x");
    return d;
}

Spacing3 parse_spacing(const std::string& s) {
    Spacing3 sp;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &sp.z, &sp.y, &sp.x) != 3)
        throw ConfigError("--spacing must be three comma-separated reals z,y,x");
    return sp;
}

// Case layout: <dir>/{train,val}/<case>.vol.json with a matching .lab.json.
std::vector<std::pair<Volume, LabelMap>> load_cases(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.ends_with(".vol.json"))
            stems.push_back(name.substr(0, name.size() - std::string(".vol.json").size()));
    }
    std::sort(stems.begin(), stems.end());
    std::vector<std::pair<Volume, LabelMap>> cases;
    for (const auto& stem : stems) {
        const std::string vol_path = dir + "/" + stem + ".vol.json";
        const std::string lab_path = dir + "/" + stem + ".lab.json";
        if (!fs::exists(lab_path)) throw DataError("missing labels for case: " + lab_path);
        cases.emplace_back(load_volume(vol_path), load_labelmap(lab_path));
    }
    if (cases.empty()) throw DataError("no .vol.json cases found in " + dir);
    return cases;
}

// ---------------------------------------------------------------------------
// phantom

struct PhantomArgs {
    std::string out_dir;
    std::uint64_t seed = 0;
    int train_count = 8;
    int val_count = 4;
    std::string dims = "16,48,48";
    std::string spacing = "3,1,1";
    std::string spec_path;
};

int run_phantom(const PhantomArgs& a) {
    namespace fs = std::filesystem;
    const Dims3 dims = parse_dims(a.dims, "--dims");
    const Spacing3 spacing = parse_spacing(a.spacing);
    std::optional<PhantomSpec> base;
    if (!a.spec_path.empty()) base = phantom_spec_from_json(read_text_file(a.spec_path));

    auto emit = [&](const std::string& subdir, int count, int index_offset) {
        fs::create_directories(a.out_dir + "/" + subdir);
        for (int i = 0; i < count; ++i) {
            PhantomSpec spec = base ? *base
                                    : default_phantom_spec(dims, spacing, a.seed, index_offset + i);
            if (base) spec.seed = a.seed * 1000003ull + static_cast<std::uint64_t>(index_offset + i);
            auto [vol, lab] = generate_phantom(spec);
            char name[32];
            std::snprintf(name, sizeof(name), "case_%03d", i);
            const std::string stem = a.out_dir + "/" + subdir + "/" + name;
            save_volume(vol, stem + ".vol.json");
            save_labelmap(lab, stem + ".lab.json");
        }
    };
    emit("train", a.train_count, 0);
    emit("val", a.val_count, a.train_count);
    std::cout << "wrote " << a.train_count << " training and " << a.val_count
              << " validation phantoms under " << a.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// transform

struct TransformArgs {
    std::string preset;
    std::string spec_path;
    std::string in_path;
    std::string out_path;
    bool print_spec = false;
};

int run_transform(const TransformArgs& a) {
    if (a.preset.empty() == a.spec_path.empty())
        throw ConfigError("transform: give exactly one of --preset or --spec");
    const TransformSpec t = a.preset.empty() ? transform_from_json(read_text_file(a.spec_path))
                                             : transform_preset(a.preset);
    if (a.print_spec) std::cout << transform_to_json(t);
    if (!a.in_path.empty()) {
        if (a.out_path.empty()) throw ConfigError("transform: --in requires --out");
        save_volume(apply_transform(load_any_volume(a.in_path), t), a.out_path);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::string run_name;
    std::string transform;
    std::string loss;
    std::string precision;
    std::string patch;
    double alpha = -1.0;
    std::int64_t seed = -1;
    int epochs = -1;
    int batch = -1;
    int steps = -1;
    int window = -1;
    int net_base = -1;
    int net_scales = -1;
    int net_classes = -1;
    double lr0 = -1.0;
    bool oversample_fg = false;
};

struct TrainSetup {
    TrainConfig cfg;
    NetworkSpec net;
    std::string data_dir;
    std::string transform = "SLF1";
    bool net_classes_explicit = false;
};

TrainSetup parse_train_config(const std::string& path, std::vector<std::string>& issues) {
    TrainSetup s;
    s.net = default_network_spec(BlockKind::Separable, 4, 8, 3);
    if (path.empty()) return s;
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        issues.push_back(std::string("config JSON parse error: ") + e.what());
        return s;
    }
    if (j.contains("data_dir")) s.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("out_dir")) s.cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("run_name")) s.cfg.run_name = j["run_name"].get<std::string>();
    if (j.contains("transform")) s.transform = j["transform"].get<std::string>();
    if (j.contains("network")) {
        try {
            s.net = network_spec_from_json(j["network"].dump());
            s.net_classes_explicit = j["network"].contains("num_classes");
        } catch (const ConfigError& e) {
            issues.push_back(e.what());
        }
    }
    if (j.contains("loss_config")) {
        try {
            s.cfg.loss_cfg = loss_config_from_json(j["loss_config"].dump());
        } catch (const ConfigError& e) {
            issues.push_back(e.what());
        }
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        s.cfg.epochs = t.value("epochs", s.cfg.epochs);
        s.cfg.batch_size = t.value("batch_size", s.cfg.batch_size);
        s.cfg.lr0 = t.value("lr0", s.cfg.lr0);
        s.cfg.weight_decay = t.value("weight_decay", s.cfg.weight_decay);
        s.cfg.lr_decay = t.value("lr_decay", s.cfg.lr_decay);
        s.cfg.lr_step_epochs = t.value("lr_step_epochs", s.cfg.lr_step_epochs);
        s.cfg.center_window_hw = t.value("center_window_hw", s.cfg.center_window_hw);
        s.cfg.seed = t.value("seed", s.cfg.seed);
        s.cfg.steps_per_epoch = t.value("steps_per_epoch", s.cfg.steps_per_epoch);
        s.cfg.oversample_foreground = t.value("oversample_foreground", s.cfg.oversample_foreground);
        s.cfg.ath_alpha = t.value("ath_alpha", s.cfg.ath_alpha);
        if (t.contains("patch")) {
            const auto& p = t["patch"];
            if (!p.is_array() || p.size() != 3)
                issues.push_back("train.patch must be a 3-element array [z,y,x]");
            else
                s.cfg.patch = {p[0].get<std::int64_t>(), p[1].get<std::int64_t>(), p[2].get<std::int64_t>()};
        }
        if (t.contains("loss")) {
            try {
                s.cfg.loss = loss_kind_from_string(t["loss"].get<std::string>());
            } catch (const ConfigError& e) {
                issues.push_back(e.what());
            }
        }
        if (t.contains("precision")) {
            const std::string p = t["precision"].get<std::string>();
            if (p == "f32")
                s.cfg.precision = Precision::F32;
            else if (p == "f64")
                s.cfg.precision = Precision::F64;
            else
                issues.push_back("train.precision must be \"f32\" or \"f64\"");
        }
    }
    return s;
}

int run_train(const TrainArgs& a) {
    std::vector<std::string> issues;
    TrainSetup s = parse_train_config(a.config_path, issues);

    if (!a.data_dir.empty()) s.data_dir = a.data_dir;
    if (!a.out_dir.empty()) s.cfg.out_dir = a.out_dir;
    if (!a.run_name.empty()) s.cfg.run_name = a.run_name;
    if (!a.transform.empty()) s.transform = a.transform;
    if (!a.loss.empty()) {
        try {
            s.cfg.loss = loss_kind_from_string(a.loss);
        } catch (const ConfigError& e) {
            issues.push_back(e.what());
        }
    }
    if (!a.precision.empty()) {
        if (a.precision == "f32")
            s.cfg.precision = Precision::F32;
        else if (a.precision == "f64")
            s.cfg.precision = Precision::F64;
        else
            issues.push_back("--precision must be f32 or f64");
    }
    if (!a.patch.empty()) s.cfg.patch = parse_dims(a.patch, "--patch");
    if (a.alpha >= 0) s.cfg.ath_alpha = a.alpha;
    if (a.seed >= 0) s.cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (a.epochs >= 0) s.cfg.epochs = a.epochs;
    if (a.batch >= 0) s.cfg.batch_size = a.batch;
    if (a.steps >= 0) s.cfg.steps_per_epoch = a.steps;
    if (a.window >= 0) s.cfg.center_window_hw = a.window;
    if (a.lr0 >= 0) s.cfg.lr0 = a.lr0;
    if (a.net_base >= 0) s.net.base_channels = a.net_base;
    if (a.net_scales >= 0) {
        s.net = default_network_spec(s.net.block_kind, s.net.num_classes,
                                     a.net_base >= 0 ? a.net_base : s.net.base_channels, a.net_scales);
    }
    if (a.net_classes >= 0) {
        s.net.num_classes = a.net_classes;
        s.net_classes_explicit = true;
    }
    if (a.oversample_fg) s.cfg.oversample_foreground = true;

    if (s.data_dir.empty()) issues.push_back("no data directory (give --data or config data_dir)");
    if (s.cfg.epochs < 1) issues.push_back("epochs must be >= 1");
    if (s.cfg.batch_size < 1) issues.push_back("batch_size must be >= 1");
    if (s.cfg.lr0 <= 0) issues.push_back("lr0 must be > 0");
    if (!issues.empty()) {
        std::string all = "invalid configuration: " + issues[0];
        for (std::size_t i = 1; i < issues.size(); ++i) all += "; " + issues[i];
        throw ConfigError(all);
    }

    const auto train_cases = load_cases(s.data_dir + "/train");
    std::vector<std::pair<Volume, LabelMap>> val_cases;
    if (std::filesystem::is_directory(s.data_dir + "/val"))
        val_cases = load_cases(s.data_dir + "/val");

    if (!s.net_classes_explicit) {
        int classes = 2;
        for (const auto& [v, g] : train_cases) classes = std::max(classes, g.num_classes);
        s.net.num_classes = classes;
    }

    const TrainResult r =
        train(s.cfg, s.net, train_cases, val_cases, resolve_transform(s.transform));

    json out;
    out["best_checkpoint"] = r.best_checkpoint_path;
    out["last_checkpoint"] = r.last_checkpoint_path;
    out["log"] = r.log_path;
    out["best_epoch"] = r.best_epoch;
    out["best_val_mean_fg_dsc"] = r.best_val_mean_fg_dsc;
    out["final_train_loss"] = r.log.empty() ? 0.0 : r.log.back().train_loss;
    std::cout << out.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict / ensemble / uncertainty

struct PredictArgs {
    std::string checkpoint;
    std::string transform = "SLF1";
    std::string in_path;
    std::string out_label;
    std::string out_prob;
    std::int64_t window = 256;
    std::int64_t patch_depth = 16;
};

int run_predict(const PredictArgs& a) {
    Model<float> m = load_checkpoint(a.checkpoint);
    PredictConfig cfg;
    cfg.window_hw = a.window;
    cfg.patch_depth = a.patch_depth;
    auto [probs, labels] = predict(m, load_any_volume(a.in_path), resolve_transform(a.transform), cfg);
    if (!a.out_label.empty()) save_labelmap(labels, a.out_label);
    if (!a.out_prob.empty()) save_probmap(probs, a.out_prob);
    if (a.out_label.empty() && a.out_prob.empty())
        throw ConfigError("predict: nothing to do (give --out-label and/or --out-prob)");
    return 0;
}

struct EnsembleArgs {
    std::string config_path;
    std::string in_path;
    std::string out_label;
    std::string out_prob;
    std::string out_members_dir;
    std::int64_t window = 256;
    std::int64_t patch_depth = 16;
};

int run_ensemble_cmd(const EnsembleArgs& a) {
    const EnsembleSpec spec = ensemble_spec_from_json(read_text_file(a.config_path));
    PredictConfig cfg;
    cfg.window_hw = a.window;
    cfg.patch_depth = a.patch_depth;
    const EnsembleResult r = run_ensemble(spec, load_any_volume(a.in_path), cfg);
    if (!a.out_label.empty()) save_labelmap(r.final_labels, a.out_label);
    if (!a.out_prob.empty()) save_probmap(r.fused, a.out_prob);
    if (!a.out_members_dir.empty()) {
        std::filesystem::create_directories(a.out_members_dir);
        for (std::size_t i = 0; i < r.member_labels.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "member_%02zu", i);
            save_labelmap(r.member_labels[i], a.out_members_dir + "/" + name + ".lab.json");
        }
    }
    return 0;
}

struct UncertaintyArgs {
    std::vector<std::string> label_paths;
    std::string out_entropy;
    std::string gt_path;
    std::string report_path;
};

int run_uncertainty(const UncertaintyArgs& a) {
    if (a.label_paths.size() < 2)
        throw ConfigError("uncertainty: need at least two --labels member files");
    std::vector<LabelMap> members;
    for (const auto& p : a.label_paths) members.push_back(load_labelmap(p));
    if (!a.out_entropy.empty()) save_uncertainty(entropy_map(members), a.out_entropy);
    if (!a.report_path.empty()) {
        if (a.gt_path.empty()) throw ConfigError("uncertainty: --report requires --gt");
        const UncertaintyReport rep = uncertainty_report(members, load_labelmap(a.gt_path));
        write_text_file(a.report_path, uncertainty_report_to_json(rep));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate / export-slices / param-count

struct EvaluateArgs {
    std::string pred_path;
    std::string gt_path;
    std::string weights = "uniform";
    std::string out_path;
    bool table = false;
};

int run_evaluate(const EvaluateArgs& a) {
    const LabelMap pred = load_labelmap(a.pred_path);
    const LabelMap gt = load_labelmap(a.gt_path);
    std::vector<double> weights;
    std::vector<std::string> names;
    if (a.weights == "structseg22") {
        weights = structseg22_weights();
        names = structseg22_names();
    } else if (a.weights != "uniform") {
        const json j = json::parse(read_text_file(a.weights));
        weights = j.get<std::vector<double>>();
    }
    MetricsReport r = evaluate_labelmaps(pred, gt, weights);
    if (!names.empty() && names.size() == r.class_names.size()) r.class_names = names;
    const std::string js = metrics_report_to_json(r);
    std::cout << js;
    if (!a.out_path.empty()) write_text_file(a.out_path, js);
    if (a.table) std::cout << metrics_report_to_table(r);
    return 0;
}

struct ExportArgs {
    std::string in_path;
    std::string axis = "z";
    std::int64_t index = 0;
    std::string out_path;
};

int run_export(const ExportArgs& a) {
    int axis;
    if (a.axis == "z" || a.axis == "0")
        axis = 0;
    else if (a.axis == "y" || a.axis == "1")
        axis = 1;
    else if (a.axis == "x" || a.axis == "2")
        axis = 2;
    else
        throw ConfigError("--axis must be z, y, x (or 0, 1, 2)");
    if (a.in_path.ends_with(".lab.json"))
        export_slice_image(load_labelmap(a.in_path), axis, a.index, a.out_path);
    else if (a.in_path.ends_with(".unc.json"))
        export_slice_image(load_uncertainty(a.in_path), axis, a.index, a.out_path);
    else
        export_slice_image(load_any_volume(a.in_path), axis, a.index, a.out_path);
    return 0;
}

struct ParamCountArgs {
    std::string net = "both";
    int base = 48;
    int scales = 4;
    int classes = 23;
};

int run_param_count(const ParamCountArgs& a) {
    auto count_of = [&](BlockKind kind) {
        const NetworkSpec spec = default_network_spec(kind, a.classes, a.base, a.scales);
        const Model<float> m = kind == BlockKind::Separable ? build_sepnet<float>(spec)
                                                            : build_unet_baseline<float>(spec);
        return param_count(m);
    };
    if (a.net == "sepnet" || a.net == "both")
        std::cout << "sepnet " << count_of(BlockKind::Separable) << "\n";
    if (a.net == "unet" || a.net == "both")
        std::cout << "unet " << count_of(BlockKind::Plain) << "\n";
    if (a.net == "both") {
        const double ratio = static_cast<double>(count_of(BlockKind::Separable)) /
                             static_cast<double>(count_of(BlockKind::Plain));
        std::cout << "ratio " << ratio << "\n";
    }
    if (a.net != "sepnet" && a.net != "unet" && a.net != "both")
        throw ConfigError("--net must be sepnet, unet or both");
    return 0;
}

void print_error(const std::string& kind, int code, const std::string& message) {
    json j;
    j["error"] = message;
    j["kind"] = kind;
    j["code"] = code;
    std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sepseg: anisotropic CT segmentation toolkit (exit codes: 0 ok, 2 config error, "
                 "3 data error, 4 numerical failure)"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Worker threads for the convolution kernels")
        ->default_val(1);

    PhantomArgs pa;
    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom dataset");
    phantom->add_option("--out", pa.out_dir, "Output dataset directory (train/ and val/ created inside)")
        ->required();
    phantom->add_option("--seed", pa.seed, "Generation seed")->default_val(0);
    phantom->add_option("--count", pa.train_count, "Number of training cases")->default_val(8);
    phantom->add_option("--val-count", pa.val_count, "Number of validation cases")->default_val(4);
    phantom->add_option("--dims", pa.dims, "Grid dims z,y,x")->default_val("16,48,48");
    phantom->add_option("--spacing", pa.spacing, "Voxel spacing in mm z,y,x")->default_val("3,1,1");
    phantom->add_option("--spec", pa.spec_path, "Explicit phantom spec JSON (overrides the built-in family)");

    TransformArgs ta;
    auto* transform = app.add_subcommand("transform", "Apply an HU intensity transform to a volume");
    transform->add_option("--preset", ta.preset, "Preset name: SLF1, SLF2, SLF3, NLF1, NLF2");
    transform->add_option("--spec", ta.spec_path, "Transform spec JSON file ({\"xs\":[...],\"hs\":[...]})");
    transform->add_option("--in", ta.in_path, "Input volume (.vol.json or .nii)");
    transform->add_option("--out", ta.out_path, "Output normalized volume (.vol.json)");
    transform->add_flag("--print-spec", ta.print_spec, "Print the resolved anchor spec as JSON");

    TrainArgs tra;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a phantom or CT dataset");
    train_cmd->add_option("--config", tra.config_path, "Pipeline config JSON (flags override file values)");
    train_cmd->add_option("--data", tra.data_dir, "Dataset directory with train/ and val/ subdirs");
    train_cmd->add_option("--out", tra.out_dir, "Output directory for checkpoints and logs");
    train_cmd->add_option("--run-name", tra.run_name, "Stem for checkpoint/log file names");
    train_cmd->add_option("--transform", tra.transform, "Intensity transform preset name or spec file");
    train_cmd->add_option("--loss", tra.loss, "Loss: dice, l_exp or ath_l_exp");
    train_cmd->add_option("--alpha", tra.alpha, "Attention parameter for ath_l_exp");
    train_cmd->add_option("--seed", tra.seed, "Training seed");
    train_cmd->add_option("--epochs", tra.epochs, "Number of epochs");
    train_cmd->add_option("--batch", tra.batch, "Batch size");
    train_cmd->add_option("--steps", tra.steps, "Steps per epoch (0 = ceil(#train/batch))");
    train_cmd->add_option("--patch", tra.patch, "Training patch dims z,y,x");
    train_cmd->add_option("--window", tra.window, "In-plane center window before patching");
    train_cmd->add_option("--lr0", tra.lr0, "Initial learning rate");
    train_cmd->add_option("--net-base", tra.net_base, "Network base channels");
    train_cmd->add_option("--net-scales", tra.net_scales, "Network scale count");
    train_cmd->add_option("--net-classes", tra.net_classes, "Class count (default: inferred from labels)");
    train_cmd->add_option("--precision", tra.precision, "Arithmetic precision: f32 or f64");
    train_cmd->add_flag("--oversample-foreground", tra.oversample_fg,
                        "Bias half the patch draws toward foreground-containing crops");

    PredictArgs pra;
    auto* predict_cmd = app.add_subcommand("predict", "Segment a volume with a trained checkpoint");
    predict_cmd->add_option("--checkpoint", pra.checkpoint, "Model checkpoint path")->required();
    predict_cmd->add_option("--transform", pra.transform, "Intensity transform preset name or spec file")
        ->default_val("SLF1");
    predict_cmd->add_option("--in", pra.in_path, "Input HU volume (.vol.json or .nii)")->required();
    predict_cmd->add_option("--out-label", pra.out_label, "Output label map (.lab.json)");
    predict_cmd->add_option("--out-prob", pra.out_prob, "Output probability map (.prob.json)");
    predict_cmd->add_option("--window", pra.window, "In-plane center window")->default_val(256);
    predict_cmd->add_option("--patch-depth", pra.patch_depth, "Depth tile extent")->default_val(16);

    EnsembleArgs ea;
    auto* ensemble_cmd = app.add_subcommand("ensemble", "Fuse several member models class-wise");
    ensemble_cmd->add_option("--config", ea.config_path, "Ensemble spec JSON")->required();
    ensemble_cmd->add_option("--in", ea.in_path, "Input HU volume")->required();
    ensemble_cmd->add_option("--out-label", ea.out_label, "Fused label map output (.lab.json)");
    ensemble_cmd->add_option("--out-prob", ea.out_prob, "Fused probability map output (.prob.json)");
    ensemble_cmd->add_option("--out-members", ea.out_members_dir,
                             "Directory for per-member label maps (for uncertainty analysis)");
    ensemble_cmd->add_option("--window", ea.window, "In-plane center window")->default_val(256);
    ensemble_cmd->add_option("--patch-depth", ea.patch_depth, "Depth tile extent")->default_val(16);

    UncertaintyArgs ua;
    auto* uncertainty_cmd =
        app.add_subcommand("uncertainty", "Voxel-wise entropy and error-rate analysis of an ensemble");
    uncertainty_cmd->add_option("--labels", ua.label_paths, "Member label maps (two or more)")
        ->required()
        ->expected(-2);
    uncertainty_cmd->add_option("--out-entropy", ua.out_entropy, "Entropy map output (.unc.json)");
    uncertainty_cmd->add_option("--gt", ua.gt_path, "Ground-truth label map for the report");
    uncertainty_cmd->add_option("--report", ua.report_path, "Error-rate-per-level report JSON output");

    EvaluateArgs eva;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Compute DSC/HD95/ASSD against ground truth");
    evaluate_cmd->add_option("--pred", eva.pred_path, "Predicted label map")->required();
    evaluate_cmd->add_option("--gt", eva.gt_path, "Ground-truth label map")->required();
    evaluate_cmd->add_option("--weights", eva.weights,
                             "Importance weights: uniform, structseg22, or a JSON array file")
        ->default_val("uniform");
    evaluate_cmd->add_option("--out", eva.out_path, "Also write the report JSON here");
    evaluate_cmd->add_flag("--table", eva.table, "Print an aligned text table after the JSON");

    ExportArgs exa;
    auto* export_cmd = app.add_subcommand("export-slices", "Write one slice as an 8-bit PGM image");
    export_cmd->add_option("--in", exa.in_path, "Input .vol.json, .lab.json, .unc.json or .nii")
        ->required();
    export_cmd->add_option("--axis", exa.axis, "Slice axis: z, y or x")->default_val("z");
    export_cmd->add_option("--index", exa.index, "Slice index along the axis")->required();
    export_cmd->add_option("--out", exa.out_path, "Output PGM path")->required();

    ParamCountArgs pca;
    auto* param_cmd = app.add_subcommand("param-count", "Count model parameters");
    param_cmd->add_option("--net", pca.net, "Which network: sepnet, unet or both")->default_val("both");
    param_cmd->add_option("--base", pca.base, "Base channels")->default_val(48);
    param_cmd->add_option("--scales", pca.scales, "Scale count")->default_val(4);
    param_cmd->add_option("--classes", pca.classes, "Output class count")->default_val(23);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("config", 2, e.what());
        return 2;
    }

    try {
        set_kernel_threads(threads);
        if (*phantom) return run_phantom(pa);
        if (*transform) return run_transform(ta);
        if (*train_cmd) return run_train(tra);
        if (*predict_cmd) return run_predict(pra);
        if (*ensemble_cmd) return run_ensemble_cmd(ea);
        if (*uncertainty_cmd) return run_uncertainty(ua);
        if (*evaluate_cmd) return run_evaluate(eva);
        if (*export_cmd) return run_export(exa);
        if (*param_cmd) return run_param_count(pca);
    } catch (const ConfigError& e) {
        print_error("config", 2, e.what());
        return 2;
    } catch (const DataError& e) {
        print_error("data", 3, e.what());
        return 3;
    } catch (const NumericError& e) {
        print_error("numeric", 4, e.what());
        return 4;
    } catch (const std::exception& e) {
        print_error("internal", 1, e.what());
        return 1;
    }
    return 0;
}
