#include "sepseg/loss.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

namespace sepseg {

namespace {

struct Layout {
    std::int64_t n, c, spatial;
};

template <class T>
Layout layout_of(const Tensor<T>& p, const Tensor<T>& g) {
    if (!p.same_shape(g)) throw ConfigError("loss: prediction and ground-truth shapes differ");
    if (p.rank() == 5) return {p.size(0), p.size(1), p.size(2) * p.size(3) * p.size(4)};
    if (p.rank() == 4) return {1, p.size(0), p.size(1) * p.size(2) * p.size(3)};
    throw ConfigError("loss: tensors must be (C,D,H,W) or (N,C,D,H,W)");
}

double weight_for(const LossConfig& cfg, std::int64_t c) {
    return cfg.class_weights.empty() ? 1.0 : cfg.class_weights[static_cast<std::size_t>(c)];
}

// Per-class sums A_c = sum(g p) and B_c = sum(g + p).
void class_sums(const Tensor<double>& p, const Tensor<double>& g, const Layout& l,
                std::vector<double>& A, std::vector<double>& B) {
    A.assign(static_cast<std::size_t>(l.c), 0.0);
    B.assign(static_cast<std::size_t>(l.c), 0.0);
    for (std::int64_t b = 0; b < l.n; ++b)
        for (std::int64_t c = 0; c < l.c; ++c) {
            const double* pp = p.data.data() + (b * l.c + c) * l.spatial;
            const double* gg = g.data.data() + (b * l.c + c) * l.spatial;
            double a = 0.0, s = 0.0;
            for (std::int64_t i = 0; i < l.spatial; ++i) {
                a += gg[i] * pp[i];
                s += gg[i] + pp[i];
            }
            A[static_cast<std::size_t>(c)] += a;
            B[static_cast<std::size_t>(c)] += s;
        }
}

double l_dsc_from_sums(const std::vector<double>& A, const std::vector<double>& B,
                       const LossConfig& cfg) {
    double acc = 0.0;
    for (std::size_t c = 0; c < A.size(); ++c) {
        const double dsc = (2.0 * A[c] + cfg.epsilon) / (B[c] + cfg.epsilon);
        acc += std::pow(-std::log(dsc), cfg.gamma_dsc);
    }
    return acc / static_cast<double>(A.size());
}

}  // namespace

void validate_loss_config(const LossConfig& cfg, std::int64_t num_classes) {
    if (cfg.omega_dsc < 0 || cfg.omega_cross < 0 || cfg.gamma_dsc < 0 || cfg.gamma_cross < 0)
        throw ConfigError("loss: omega and gamma values must be non-negative");
    if (!(cfg.epsilon > 0)) throw ConfigError("loss: epsilon pseudocount must be > 0");
    if (cfg.ath_alpha && !(*cfg.ath_alpha > 0)) throw ConfigError("loss: ath alpha must be > 0");
    if (!(cfg.prob_floor > 0)) throw ConfigError("loss: probability floor must be > 0");
    if (!cfg.class_weights.empty() && num_classes > 0 &&
        static_cast<std::int64_t>(cfg.class_weights.size()) != num_classes)
        throw ConfigError("loss: class_weights length does not match the class count");
}

std::string loss_config_to_json(const LossConfig& cfg) {
    nlohmann::json j;
    j["omega_dsc"] = cfg.omega_dsc;
    j["omega_cross"] = cfg.omega_cross;
    j["gamma_dsc"] = cfg.gamma_dsc;
    j["gamma_cross"] = cfg.gamma_cross;
    j["epsilon"] = cfg.epsilon;
    if (cfg.ath_alpha)
        j["ath_alpha"] = *cfg.ath_alpha;
    else
        j["ath_alpha"] = nullptr;
    j["class_weights"] = cfg.class_weights;
    j["prob_floor"] = cfg.prob_floor;
    return j.dump(2) + "\n";
}

LossConfig loss_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid loss config JSON: ") + e.what());
    }
    LossConfig cfg;
    cfg.omega_dsc = j.value("omega_dsc", 1.0);
    cfg.omega_cross = j.value("omega_cross", 1.0);
    cfg.gamma_dsc = j.value("gamma_dsc", 1.0);
    cfg.gamma_cross = j.value("gamma_cross", 1.0);
    cfg.epsilon = j.value("epsilon", 1.0);
    if (j.contains("ath_alpha") && !j["ath_alpha"].is_null()) cfg.ath_alpha = j["ath_alpha"].get<double>();
    if (j.contains("class_weights")) cfg.class_weights = j["class_weights"].get<std::vector<double>>();
    cfg.prob_floor = j.value("prob_floor", 1e-7);
    validate_loss_config(cfg, -1);
    return cfg;
}

std::vector<double> class_weights(const std::vector<double>& freqs) {
    if (freqs.empty()) throw ConfigError("class_weights: no frequencies given");
    double total = 0.0;
    for (double f : freqs) {
        if (!(f > 0.0))
            throw ConfigError(
                "class_weights: zero class frequency; apply the pseudo-frequency floor "
                "(1 voxel) to empty classes before computing weights");
        total += f;
    }
    std::vector<double> w(freqs.size());
    for (std::size_t c = 0; c < freqs.size(); ++c) w[c] = std::sqrt(total / freqs[c]);
    return w;
}

double soft_dsc(const std::vector<double>& p, const std::vector<double>& g, double eps) {
    if (p.size() != g.size()) throw ConfigError("soft_dsc: slice sizes differ");
    double inter = 0.0, total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += g[i] * p[i];
        total += g[i] + p[i];
    }
    return (2.0 * inter + eps) / (total + eps);
}

double l_dsc(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg) {
    const Layout l = layout_of(p, g);
    validate_loss_config(cfg, l.c);
    std::vector<double> A, B;
    class_sums(p, g, l, A, B);
    return l_dsc_from_sums(A, B, cfg);
}

double l_cross(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg) {
    const Layout l = layout_of(p, g);
    validate_loss_config(cfg, l.c);
    double acc = 0.0;
    for (std::int64_t b = 0; b < l.n; ++b)
        for (std::int64_t c = 0; c < l.c; ++c) {
            const double w = weight_for(cfg, c);
            const double* pp = p.data.data() + (b * l.c + c) * l.spatial;
            const double* gg = g.data.data() + (b * l.c + c) * l.spatial;
            for (std::int64_t i = 0; i < l.spatial; ++i) {
                if (gg[i] == 0.0) continue;
                const double pc = std::min(1.0, std::max(cfg.prob_floor, pp[i]));
                acc += gg[i] * w * std::pow(-std::log(pc), cfg.gamma_cross);
            }
        }
    return acc / static_cast<double>(l.n * l.spatial);
}

double l_exp(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg) {
    return cfg.omega_dsc * l_dsc(p, g, cfg) + cfg.omega_cross * l_cross(p, g, cfg);
}

double dice_loss(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg) {
    const Layout l = layout_of(p, g);
    validate_loss_config(cfg, l.c);
    std::vector<double> A, B;
    class_sums(p, g, l, A, B);
    double mean = 0.0;
    for (std::size_t c = 0; c < A.size(); ++c)
        mean += (2.0 * A[c] + cfg.epsilon) / (B[c] + cfg.epsilon);
    return 1.0 - mean / static_cast<double>(A.size());
}

double ath_l_exp(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg) {
    if (!cfg.ath_alpha) throw ConfigError("ath_l_exp: config has no ath_alpha");
    // The Dice term sees the weighted predictions; the cross term sees raw p.
    const Tensor<double> pw = ath_apply(p, g, *cfg.ath_alpha);
    return cfg.omega_dsc * l_dsc(pw, g, cfg) + cfg.omega_cross * l_cross(p, g, cfg);
}

Tensor<double> grad_l_dsc(const Tensor<double>& p, const Tensor<double>& g, const LossConfig& cfg) {
    const Layout l = layout_of(p, g);
    validate_loss_config(cfg, l.c);
    std::vector<double> A, B;
    class_sums(p, g, l, A, B);

    Tensor<double> grad = Tensor<double>::zeros(p.shape);
    for (std::int64_t b = 0; b < l.n; ++b)
        for (std::int64_t c = 0; c < l.c; ++c) {
            const double num = 2.0 * A[static_cast<std::size_t>(c)] + cfg.epsilon;
            const double den = B[static_cast<std::size_t>(c)] + cfg.epsilon;
            const double dsc = num / den;
            // d/dDSC of (-ln DSC)^gamma, averaged over classes.
            double outer = -1.0 / dsc / static_cast<double>(l.c);
            if (cfg.gamma_dsc != 1.0)
                outer *= cfg.gamma_dsc * std::pow(-std::log(dsc), cfg.gamma_dsc - 1.0);
            const double* gg = g.data.data() + (b * l.c + c) * l.spatial;
            double* out = grad.data.data() + (b * l.c + c) * l.spatial;
            for (std::int64_t i = 0; i < l.spatial; ++i) {
                const double d_dsc = (2.0 * gg[i] * den - num) / (den * den);
                out[i] = outer * d_dsc;
            }
        }
    return grad;
}

template <class T>
Tensor<T> ath_weight(const Tensor<T>& p, const Tensor<T>& g, double alpha) {
    if (!p.same_shape(g)) throw ConfigError("ath_weight: shapes differ");
    if (!(alpha > 0)) throw ConfigError("ath_weight: alpha must be > 0");
    Tensor<T> w = Tensor<T>::zeros(p.shape);
    for (std::int64_t i = 0; i < p.numel(); ++i)
        w[i] = static_cast<T>(std::exp((static_cast<double>(p[i]) - static_cast<double>(g[i])) / alpha));
    return w;
}

template <class T>
Tensor<T> ath_apply(const Tensor<T>& p, const Tensor<T>& g, double alpha) {
    Tensor<T> w = ath_weight(p, g, alpha);
    for (std::int64_t i = 0; i < p.numel(); ++i) w[i] = static_cast<T>(p[i] * w[i]);
    return w;
}

namespace {

// Constant [C] tensor with per-class sums of g.
template <class T>
Tensor<T> g_class_sums(const Tensor<T>& g) {
    Layout l{};
    if (g.rank() == 5)
        l = {g.size(0), g.size(1), g.size(2) * g.size(3) * g.size(4)};
    else
        l = {1, g.size(0), g.size(1) * g.size(2) * g.size(3)};
    Tensor<T> out = Tensor<T>::zeros({l.c});
    for (std::int64_t b = 0; b < l.n; ++b)
        for (std::int64_t c = 0; c < l.c; ++c) {
            const T* gg = g.data.data() + (b * l.c + c) * l.spatial;
            double acc = 0.0;
            for (std::int64_t i = 0; i < l.spatial; ++i) acc += static_cast<double>(gg[i]);
            out[c] = static_cast<T>(static_cast<double>(out[c]) + acc);
        }
    return out;
}

// Per-class DSC vector node from a prediction node.
template <class T>
int build_dsc_vector(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg) {
    const int A = tape.channel_sums(tape.mul_const_tensor(p, g));
    const int B = tape.add_const_tensor(tape.channel_sums(p), g_class_sums(g));
    const int num = tape.add_scalar(tape.scale(A, 2.0), cfg.epsilon);
    const int den = tape.add_scalar(B, cfg.epsilon);
    return tape.div(num, den);
}

template <class T>
std::int64_t class_count(const Tensor<T>& t) {
    return t.rank() == 5 ? t.size(1) : t.size(0);
}

template <class T>
std::int64_t voxel_count(const Tensor<T>& t) {
    return t.numel() / class_count(t);
}

}  // namespace

template <class T>
int build_l_dsc(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg) {
    validate_loss_config(cfg, class_count(g));
    const int dsc = build_dsc_vector(tape, p, g, cfg);
    const int negln = tape.scale(
        tape.ln_clamped(dsc, cfg.prob_floor, std::numeric_limits<double>::infinity()), -1.0);
    const int powed = tape.pow_const(negln, cfg.gamma_dsc);
    return tape.scale(tape.sum_all(powed), 1.0 / static_cast<double>(class_count(g)));
}

template <class T>
int build_l_cross(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg) {
    validate_loss_config(cfg, class_count(g));
    // Mask of g * w_c, constant w.r.t. p.
    Tensor<T> mask = g;
    const std::int64_t C = class_count(g);
    const std::int64_t n = g.rank() == 5 ? g.size(0) : 1;
    const std::int64_t spatial = g.numel() / (n * C);
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            const double w = weight_for(cfg, c);
            T* mm = mask.data.data() + (b * C + c) * spatial;
            for (std::int64_t i = 0; i < spatial; ++i) mm[i] = static_cast<T>(mm[i] * w);
        }
    const int negln = tape.scale(tape.ln_clamped(p, cfg.prob_floor, 1.0), -1.0);
    const int powed = tape.pow_const(negln, cfg.gamma_cross);
    const int masked = tape.mul_const_tensor(powed, std::move(mask));
    return tape.scale(tape.sum_all(masked), 1.0 / static_cast<double>(voxel_count(g)));
}

template <class T>
int build_l_exp(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg) {
    const int dsc_term = tape.scale(build_l_dsc(tape, p, g, cfg), cfg.omega_dsc);
    const int cross_term = tape.scale(build_l_cross(tape, p, g, cfg), cfg.omega_cross);
    return tape.add(dsc_term, cross_term);
}

template <class T>
int build_ath_l_exp(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg) {
    if (!cfg.ath_alpha) throw ConfigError("build_ath_l_exp: config has no ath_alpha");
    const double alpha = *cfg.ath_alpha;
    // p^w = p * exp((p - g)/alpha); gradients flow through the weight too.
    Tensor<T> neg_g = g;
    for (auto& v : neg_g.data) v = -v;
    const int w = tape.exp_op(tape.scale(tape.add_const_tensor(p, std::move(neg_g)), 1.0 / alpha));
    const int pw = tape.mul(p, w);
    const int dsc_term = tape.scale(build_l_dsc(tape, pw, g, cfg), cfg.omega_dsc);
    const int cross_term = tape.scale(build_l_cross(tape, p, g, cfg), cfg.omega_cross);
    return tape.add(dsc_term, cross_term);
}

template <class T>
int build_dice_loss(Tape<T>& tape, int p, const Tensor<T>& g, const LossConfig& cfg) {
    validate_loss_config(cfg, class_count(g));
    const int dsc = build_dsc_vector(tape, p, g, cfg);
    return tape.add_scalar(tape.scale(tape.sum_all(dsc), -1.0 / static_cast<double>(class_count(g))),
                           1.0);
}

#define SEPSEG_LOSS_INSTANTIATE(T)                                                       \
    template Tensor<T> ath_weight<T>(const Tensor<T>&, const Tensor<T>&, double);        \
    template Tensor<T> ath_apply<T>(const Tensor<T>&, const Tensor<T>&, double);         \
    template int build_l_dsc<T>(Tape<T>&, int, const Tensor<T>&, const LossConfig&);     \
    template int build_l_cross<T>(Tape<T>&, int, const Tensor<T>&, const LossConfig&);   \
    template int build_l_exp<T>(Tape<T>&, int, const Tensor<T>&, const LossConfig&);     \
    template int build_ath_l_exp<T>(Tape<T>&, int, const Tensor<T>&, const LossConfig&); \
    template int build_dice_loss<T>(Tape<T>&, int, const Tensor<T>&, const LossConfig&);

SEPSEG_LOSS_INSTANTIATE(float)
SEPSEG_LOSS_INSTANTIATE(double)
#undef SEPSEG_LOSS_INSTANTIATE

}  // namespace sepseg
