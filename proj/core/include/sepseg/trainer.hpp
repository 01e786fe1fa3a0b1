#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sepseg/loss.hpp"
#include "sepseg/network.hpp"
#include "sepseg/transform.hpp"
#include "sepseg/volume.hpp"

namespace sepseg {

enum class LossKind { SoftDice, ExpLog, AthExpLog };
enum class Precision { F32, F64 };

LossKind loss_kind_from_string(const std::string& s);
std::string loss_kind_to_string(LossKind k);

struct TrainConfig {
    int epochs = 250;
    int batch_size = 6;
    double lr0 = 1e-3;
    double weight_decay = 1e-8;
    double lr_decay = 0.9;
    int lr_step_epochs = 10;
    Dims3 patch{16, 128, 128};
    std::int64_t center_window_hw = 256;  // in-plane window before patching
    std::uint64_t seed = 0;
    LossKind loss = LossKind::ExpLog;
    double ath_alpha = 0.5;
    LossConfig loss_cfg;  // class_weights auto-filled from the training set when empty
    bool oversample_foreground = false;
    Precision precision = Precision::F32;
    int steps_per_epoch = 0;  // 0 -> ceil(#train / batch_size)
    std::string out_dir = ".";
    std::string run_name = "run";
};

// lr0 * lr_decay^floor(epoch / lr_step_epochs); non-increasing in epoch.
double lr_at(const TrainConfig& cfg, int epoch);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    std::vector<double> val_dsc;  // per class, soft Dice on the validation set
};

struct TrainResult {
    std::string best_checkpoint_path;
    std::string last_checkpoint_path;
    std::string log_path;
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_mean_fg_dsc = 0.0;
};

// Full desk-scale loop: per epoch, (in-plane center window -> intensity
// transform -> random patch batches -> forward -> loss -> backward -> Adam)
// plus whole-volume validation soft-DSC, JSONL logging and best/last
// checkpoints. Bitwise reproducible for a fixed config and seed in
// single-threaded mode. A non-finite loss aborts with a diagnostic dump of
// the offending batch.
TrainResult train(const TrainConfig& cfg, const NetworkSpec& netspec,
                  const std::vector<std::pair<Volume, LabelMap>>& train_data,
                  const std::vector<std::pair<Volume, LabelMap>>& val_data,
                  const TransformSpec& transform);

// In-plane window actually used for a volume: min(window, extent) floored to
// a multiple of 2^(num_scales-1) so whole volumes can run through the net.
Dims3 windowed_dims(Dims3 dims, std::int64_t window_hw, std::int64_t divisor);

// Per-class soft Dice between a probability tensor (1,C,D,H,W)/(C,D,H,W)
// and integer labels over the same grid.
template <class T>
std::vector<double> soft_dsc_per_class(const Tensor<T>& probs, const LabelMap& labels, double eps);

}  // namespace sepseg
