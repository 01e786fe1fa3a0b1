#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sepseg/tape.hpp"
#include "sepseg/tensor.hpp"

namespace sepseg {

// Weights and knobs of the exponential-logarithmic loss family. The
// defaults (all weights/exponents 1, pseudocount 1) are the published
// working point.
struct LossConfig {
    double omega_dsc = 1.0;
    double omega_cross = 1.0;
    double gamma_dsc = 1.0;
    double gamma_cross = 1.0;
    double epsilon = 1.0;                // additive smoothing in the soft Dice
    std::optional<double> ath_alpha;     // hard-voxel attention parameter (> 0)
    std::vector<double> class_weights;   // per class; empty means all ones
    double prob_floor = 1e-7;            // lower clamp before any ln(p)
};

void validate_loss_config(const LossConfig& cfg, std::int64_t num_classes);
std::string loss_config_to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const std::string& json_text);

// w_c = (sum_k f_k / f_c)^0.5 from per-class voxel frequencies, computed
// once from the training set. A zero frequency is an error telling the
// caller to apply the pseudo-frequency floor (1 voxel) first.
std::vector<double> class_weights(const std::vector<double>& freqs);

// Smoothed per-class Dice (2*sum(g p) + eps) / (sum(g + p) + eps) on a flat
// class slice; an empty class against an empty prediction scores 1.
double soft_dsc(const std::vector<double>& p, const std::vector<double>& g, double eps);

// Direct evaluations over (C,D,H,W) or (N,C,D,H,W) tensors (p = predicted
// probabilities, g = one-hot ground truth). These are plain loops, fully
// independent of the tape implementations below.
double l_dsc(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg);
double l_cross(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg);
double l_exp(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg);
double ath_l_exp(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg);
double dice_loss(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg);

// Analytic gradient of l_dsc w.r.t. p: the chain rule through
// (-ln DSC_c)^gamma with the epsilon smoothing retained and the mean over
// classes folded in.
Tensor<double> grad_l_dsc(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg);

// Hard-voxel attention: w = exp((p - g)/alpha) and p^w = p * w. The
// weighting pushes predictions away from the ground truth, so mispredicted
// voxels dominate the Dice term's gradient.
template <class T>
Tensor<T> ath_weight(const Tensor<T>& p, const Tensor<T>& g, double alpha);
template <class T>
Tensor<T> ath_apply(const Tensor<T>& p, const Tensor<T>& g, double alpha);

// Tape builders for training and reverse-mode checks. g and the class
// weights enter as constants; gradients flow through p only (including
// through the attention weight, which is not detached).
template <class T>
int build_l_dsc(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg);
template <class T>
int build_l_cross(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg);
template <class T>
int build_l_exp(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg);
template <class T>
int build_ath_l_exp(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg);
template <class T>
int build_dice_loss(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg);

}  // namespace sepseg
