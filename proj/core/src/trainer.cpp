#include "sepseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "sepseg/checkpoint.hpp"
#include "sepseg/optim.hpp"
#include "sepseg/rng.hpp"

namespace sepseg {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "dice") return LossKind::SoftDice;
    if (s == "l_exp") return LossKind::ExpLog;
    if (s == "ath_l_exp") return LossKind::AthExpLog;
    throw ConfigError("unknown loss \"" + s + "\" (expected dice, l_exp or ath_l_exp)");
}

std::string loss_kind_to_string(LossKind k) {
    switch (k) {
        case LossKind::SoftDice: return "dice";
        case LossKind::ExpLog: return "l_exp";
        case LossKind::AthExpLog: return "ath_l_exp";
    }
    return "?";
}

double lr_at(const TrainConfig& cfg, int epoch) {
    return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_step_epochs));
}

Dims3 windowed_dims(Dims3 dims, std::int64_t window_hw, std::int64_t divisor) {
    auto fit = [&](std::int64_t extent) {
        std::int64_t w = std::min(window_hw, extent);
        w -= w % divisor;
        if (w < divisor)
            throw DataError("volume extent " + std::to_string(extent) +
                            " too small for the network's in-plane divisor " + std::to_string(divisor));
        return w;
    };
    return Dims3{dims.d, fit(dims.h), fit(dims.w)};
}

template <class T>
std::vector<double> soft_dsc_per_class(const Tensor<T>& probs, const LabelMap& labels, double eps) {
    std::int64_t C, spatial;
    if (probs.rank() == 5) {
        C = probs.size(1);
        spatial = probs.size(2) * probs.size(3) * probs.size(4);
    } else if (probs.rank() == 4) {
        C = probs.size(0);
        spatial = probs.size(1) * probs.size(2) * probs.size(3);
    } else {
        throw ConfigError("soft_dsc_per_class expects rank 4 or 5 probabilities");
    }
    if (spatial != labels.voxel_count()) throw ConfigError("soft_dsc_per_class: geometry mismatch");
    std::vector<double> out(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c) {
        const T* pp = probs.data.data() + c * spatial;
        double inter = 0.0, total = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) {
            const double g = labels.labels[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0;
            inter += g * static_cast<double>(pp[i]);
            total += g + static_cast<double>(pp[i]);
        }
        out[static_cast<std::size_t>(c)] = (2.0 * inter + eps) / (total + eps);
    }
    return out;
}

namespace {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("train: epochs and batch_size must be >= 1");
    if (!(cfg.lr0 > 0) || !(cfg.lr_decay > 0) || cfg.lr_step_epochs < 1)
        throw ConfigError("train: learning-rate schedule values must be positive");
    if (cfg.weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
    if (cfg.patch.d < 1 || cfg.patch.h < 1 || cfg.patch.w < 1)
        throw ConfigError("train: patch dims must be >= 1");
    if (cfg.center_window_hw < 1) throw ConfigError("train: center window must be >= 1");
    if (cfg.steps_per_epoch < 0) throw ConfigError("train: steps_per_epoch must be >= 0");
}

template <class T>
struct Batch {
    Tensor<T> x;  // (N,1,d,h,w)
    Tensor<T> g;  // (N,C,d,h,w) one-hot
    std::vector<std::size_t> volume_indices;
};

template <class T>
Batch<T> assemble_batch(const std::vector<std::pair<Volume, LabelMap>>& data, const TrainConfig& cfg,
                        int num_classes, SplitMix64& rng) {
    const Dims3 ps = cfg.patch;
    const std::int64_t voxels = ps.count();
    Batch<T> batch;
    batch.x = Tensor<T>::zeros({cfg.batch_size, 1, ps.d, ps.h, ps.w});
    batch.g = Tensor<T>::zeros({cfg.batch_size, num_classes, ps.d, ps.h, ps.w});
    for (int n = 0; n < cfg.batch_size; ++n) {
        const std::size_t vi = static_cast<std::size_t>(rng.next_below(data.size()));
        const auto& [vol, lab] = data[vi];
        Volume pv;
        LabelMap pl;
        bool want_fg = cfg.oversample_foreground && rng.next_double() < 0.5;
        for (int attempt = 0;; ++attempt) {
            auto [cv, cl] = random_crop(vol, lab, ps, rng);
            const bool has_fg = std::any_of(cl.labels.begin(), cl.labels.end(),
                                            [](std::uint16_t l) { return l != 0; });
            if (!want_fg || has_fg || attempt >= 7) {
                pv = std::move(cv);
                pl = std::move(cl);
                break;
            }
        }
        const auto& values = pv.f32();
        for (std::int64_t i = 0; i < voxels; ++i) {
            batch.x[(n * 1) * voxels + i] = static_cast<T>(values[static_cast<std::size_t>(i)]);
            const std::int64_t cls = pl.labels[static_cast<std::size_t>(i)];
            batch.g[(n * num_classes + cls) * voxels + i] = T(1);
        }
        batch.volume_indices.push_back(vi);
    }
    return batch;
}

template <class T>
int build_loss(Tape<T>& tape, int p, const Tensor<T>& g, const TrainConfig& cfg,
               const LossConfig& loss_cfg) {
    switch (cfg.loss) {
        case LossKind::SoftDice: return build_dice_loss(tape, p, g, loss_cfg);
        case LossKind::ExpLog: return build_l_exp(tape, p, g, loss_cfg);
        case LossKind::AthExpLog: return build_ath_l_exp(tape, p, g, loss_cfg);
    }
    throw ConfigError("train: unknown loss kind");
}

template <class T>
TrainResult train_impl(const TrainConfig& cfg, const NetworkSpec& netspec,
                       const std::vector<std::pair<Volume, LabelMap>>& train_data,
                       const std::vector<std::pair<Volume, LabelMap>>& val_data,
                       const TransformSpec& transform) {
    const std::int64_t divisor = std::int64_t(1) << (netspec.num_scales - 1);
    if (cfg.patch.h % divisor || cfg.patch.w % divisor)
        throw ConfigError("train: patch in-plane dims must be divisible by 2^(num_scales-1)");

    const int num_classes = netspec.num_classes;

    // Window, transform and validate the data once up front.
    auto prepare = [&](const std::vector<std::pair<Volume, LabelMap>>& src) {
        std::vector<std::pair<Volume, LabelMap>> out;
        out.reserve(src.size());
        for (const auto& [vol, lab] : src) {
            if (vol.dims != lab.dims) throw DataError("train: volume and label dims differ");
            if (lab.num_classes > num_classes)
                throw DataError("train: labels carry more classes than the network emits");
            const Dims3 w = windowed_dims(vol.dims, cfg.center_window_hw, divisor);
            Volume wv = center_crop(vol, w);
            LabelMap wl = center_crop(lab, w);
            if (w.d < cfg.patch.d || w.h < cfg.patch.h || w.w < cfg.patch.w)
                throw DataError("train: patch exceeds the windowed volume dims");
            out.emplace_back(apply_transform(wv, transform), std::move(wl));
        }
        return out;
    };
    if (train_data.empty()) throw ConfigError("train: no training volumes");
    const auto train_set = prepare(train_data);
    // Validation volumes only need to satisfy the divisor, not the patch.
    std::vector<std::pair<Volume, LabelMap>> val_set;
    for (const auto& [vol, lab] : val_data) {
        const Dims3 w = windowed_dims(vol.dims, cfg.center_window_hw, divisor);
        val_set.emplace_back(apply_transform(center_crop(vol, w), transform), center_crop(lab, w));
    }

    // Class weights from training-set frequencies unless supplied.
    LossConfig loss_cfg = cfg.loss_cfg;
    if (cfg.ath_alpha > 0 && !loss_cfg.ath_alpha && cfg.loss == LossKind::AthExpLog)
        loss_cfg.ath_alpha = cfg.ath_alpha;
    if (loss_cfg.class_weights.empty()) {
        std::vector<double> freqs(static_cast<std::size_t>(num_classes), 0.0);
        for (const auto& [v, lab] : train_set)
            for (auto l : lab.labels) freqs[l] += 1.0;
        for (auto& f : freqs)
            if (f == 0.0) f = 1.0;  // pseudo-frequency floor for absent classes
        loss_cfg.class_weights = class_weights(freqs);
    }
    validate_loss_config(loss_cfg, num_classes);

    Model<T> model = netspec.block_kind == BlockKind::Separable ? build_sepnet<T>(netspec)
                                                                : build_unet_baseline<T>(netspec);
    init_params(model, cfg.seed);
    AdamState<T> adam = make_adam_state(model);
    SplitMix64 sampler = SplitMix64(cfg.seed).split(0xBA7C4);

    const int steps = cfg.steps_per_epoch > 0
                          ? cfg.steps_per_epoch
                          : static_cast<int>((train_set.size() + cfg.batch_size - 1) /
                                             static_cast<std::size_t>(cfg.batch_size));

    std::filesystem::create_directories(cfg.out_dir);
    const std::string log_path = cfg.out_dir + "/" + cfg.run_name + "_log.jsonl";
    std::ofstream log_out(log_path, std::ios::trunc);
    if (!log_out) throw DataError("train: cannot open log for writing: " + log_path);

    TrainResult result;
    result.log_path = log_path;
    std::vector<Tensor<T>> best_params;
    double best_score = -1.0;
    int best_epoch = -1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(cfg, epoch);
        double loss_sum = 0.0;
        for (int step = 0; step < steps; ++step) {
            Batch<T> batch = assemble_batch<T>(train_set, cfg, num_classes, sampler);
            Tape<T> tape;
            const int x_node = tape.constant(std::move(batch.x));
            const int prob = model_forward_on_tape(model, tape, x_node);
            const int loss_node = build_loss(tape, prob, batch.g, cfg, loss_cfg);
            const double loss = tape.scalar_value(loss_node);
            if (!std::isfinite(loss)) {
                const std::string dump_path = cfg.out_dir + "/" + cfg.run_name + "_diagnostic.json";
                nlohmann::json diag;
                diag["epoch"] = epoch;
                diag["step"] = step;
                diag["loss"] = loss;
                diag["volume_indices"] = nlohmann::json::array();
                for (auto vi : batch.volume_indices) diag["volume_indices"].push_back(vi);
                std::ofstream(dump_path) << diag.dump(2) << "\n";
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(step) + "; batch diagnostics at " +
                                   dump_path);
            }
            loss_sum += loss;
            model.zero_grads();
            tape.backward(loss_node);
            adam_step(model, adam, lr, cfg.weight_decay);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = loss_sum / std::max(1, steps);

        if (!val_set.empty()) {
            std::vector<double> dsc_sum(static_cast<std::size_t>(num_classes), 0.0);
            for (const auto& [vol, lab] : val_set) {
                const auto& values = vol.f32();
                Tensor<T> x = Tensor<T>::zeros({1, 1, vol.dims.d, vol.dims.h, vol.dims.w});
                for (std::size_t i = 0; i < values.size(); ++i) x[static_cast<std::int64_t>(i)] = static_cast<T>(values[i]);
                const Tensor<T> probs = model_forward(model, x);
                model.tape.reset();
                const auto dsc = soft_dsc_per_class(probs, lab, loss_cfg.epsilon);
                for (std::size_t c = 0; c < dsc.size(); ++c) dsc_sum[c] += dsc[c];
            }
            entry.val_dsc.resize(dsc_sum.size());
            for (std::size_t c = 0; c < dsc_sum.size(); ++c)
                entry.val_dsc[c] = dsc_sum[c] / static_cast<double>(val_set.size());

            double fg = 0.0;
            for (std::size_t c = 1; c < entry.val_dsc.size(); ++c) fg += entry.val_dsc[c];
            fg /= std::max<std::size_t>(1, entry.val_dsc.size() - 1);
            if (fg > best_score) {
                best_score = fg;
                best_epoch = epoch;
                best_params = model.params;
            }
        }

        nlohmann::json j;
        j["epoch"] = entry.epoch;
        j["lr"] = entry.lr;
        j["train_loss"] = entry.train_loss;
        j["val_dsc_per_class"] = entry.val_dsc;
        log_out << j.dump() << "\n";
        result.log.push_back(std::move(entry));
    }
    log_out.close();

    result.last_checkpoint_path = cfg.out_dir + "/" + cfg.run_name + "_last.ckpt";
    save_checkpoint(model, result.last_checkpoint_path);
    if (best_epoch >= 0) {
        std::vector<Tensor<T>> last = std::move(model.params);
        model.params = std::move(best_params);
        result.best_checkpoint_path = cfg.out_dir + "/" + cfg.run_name + "_best.ckpt";
        save_checkpoint(model, result.best_checkpoint_path);
        model.params = std::move(last);
        result.best_epoch = best_epoch;
        result.best_val_mean_fg_dsc = best_score;
    } else {
        result.best_checkpoint_path = result.last_checkpoint_path;
    }
    return result;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const NetworkSpec& netspec,
                  const std::vector<std::pair<Volume, LabelMap>>& train_data,
                  const std::vector<std::pair<Volume, LabelMap>>& val_data,
                  const TransformSpec& transform) {
    validate_train_config(cfg);
    if (cfg.precision == Precision::F64)
        return train_impl<double>(cfg, netspec, train_data, val_data, transform);
    return train_impl<float>(cfg, netspec, train_data, val_data, transform);
}

template std::vector<double> soft_dsc_per_class<float>(const Tensor<float>&, const LabelMap&, double);
template std::vector<double> soft_dsc_per_class<double>(const Tensor<double>&, const LabelMap&, double);

}  // namespace sepseg
