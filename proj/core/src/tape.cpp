#include "sepseg/tape.hpp"

#include <cmath>

namespace sepseg {

namespace {

template <class T>
Tensor<T> elementwise_unary(const Tensor<T>& x, double (*f)(double)) {
    Tensor<T> y = Tensor<T>::zeros(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = static_cast<T>(f(static_cast<double>(x[i])));
    return y;
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b)) throw ConfigError(std::string(what) + ": operand shapes differ");
}

}  // namespace

template <class T>
int Tape<T>::push(OpNode<T> node) {
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
const Tensor<T>& Tape<T>::value(int id) const {
    const OpNode<T>& n = nodes_[static_cast<std::size_t>(id)];
    return n.ext_value ? *n.ext_value : n.out;
}

template <class T>
double Tape<T>::scalar_value(int id) const {
    const Tensor<T>& v = value(id);
    if (v.numel() != 1) throw ConfigError("scalar_value: node is not a scalar");
    return static_cast<double>(v[0]);
}

template <class T>
const Tensor<T>& Tape<T>::grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].grad;
}

template <class T>
int Tape<T>::leaf(const Tensor<T>* value, Tensor<T>* grad_sink) {
    OpNode<T> n;
    n.kind = OpKind::Leaf;
    n.ext_value = value;
    n.ext_grad = grad_sink;
    n.requires_grad = grad_sink != nullptr;
    return push(std::move(n));
}

template <class T>
int Tape<T>::input(Tensor<T> value) {
    OpNode<T> n;
    n.kind = OpKind::Leaf;
    n.out = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

template <class T>
int Tape<T>::constant(Tensor<T> value) {
    OpNode<T> n;
    n.kind = OpKind::Leaf;
    n.out = std::move(value);
    n.requires_grad = false;
    return push(std::move(n));
}

template <class T>
int Tape<T>::conv3d_op(int x, int k, int bias) {
    OpNode<T> n;
    n.kind = OpKind::Conv3d;
    n.in0 = x;
    n.in1 = k;
    n.in2 = bias;
    n.out = conv3d(value(x), value(k), value(bias));
    n.requires_grad = needs_grad(x) || needs_grad(k) || needs_grad(bias);
    return push(std::move(n));
}

template <class T>
int Tape<T>::instance_norm_op(int x, int gamma, int beta, double eps) {
    OpNode<T> n;
    n.kind = OpKind::InstanceNorm;
    n.in0 = x;
    n.in1 = gamma;
    n.in2 = beta;
    n.s0 = eps;
    n.out = instance_norm(value(x), value(gamma), value(beta), eps, &n.norm_cache);
    n.requires_grad = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
    return push(std::move(n));
}

template <class T>
int Tape<T>::relu_op(int x) {
    OpNode<T> n;
    n.kind = OpKind::Relu;
    n.in0 = x;
    n.out = relu(value(x));
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::max_pool_op(int x, Window3 window) {
    OpNode<T> n;
    n.kind = OpKind::MaxPool;
    n.in0 = x;
    n.window = window;
    n.out = max_pool(value(x), window, &n.argmax);
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::upsample_op(int x, Window3 factor) {
    OpNode<T> n;
    n.kind = OpKind::Upsample;
    n.in0 = x;
    n.window = factor;
    n.out = upsample_nearest(value(x), factor);
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::concat_op(int a, int b) {
    OpNode<T> n;
    n.kind = OpKind::ConcatChannels;
    n.in0 = a;
    n.in1 = b;
    n.out = concat_channels(value(a), value(b));
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

template <class T>
int Tape<T>::softmax_op(int x) {
    OpNode<T> n;
    n.kind = OpKind::SoftmaxChannels;
    n.in0 = x;
    n.out = softmax_channels(value(x));
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::add(int a, int b) {
    OpNode<T> n;
    n.kind = OpKind::Add;
    n.in0 = a;
    n.in1 = b;
    require_same_shape(value(a), value(b), "add");
    n.out = value(a);
    for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] += value(b)[i];
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

template <class T>
int Tape<T>::sub(int a, int b) {
    OpNode<T> n;
    n.kind = OpKind::Sub;
    n.in0 = a;
    n.in1 = b;
    require_same_shape(value(a), value(b), "sub");
    n.out = value(a);
    for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] -= value(b)[i];
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

template <class T>
int Tape<T>::mul(int a, int b) {
    OpNode<T> n;
    n.kind = OpKind::Mul;
    n.in0 = a;
    n.in1 = b;
    require_same_shape(value(a), value(b), "mul");
    n.out = value(a);
    for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] *= value(b)[i];
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

template <class T>
int Tape<T>::div(int a, int b) {
    OpNode<T> n;
    n.kind = OpKind::Div;
    n.in0 = a;
    n.in1 = b;
    require_same_shape(value(a), value(b), "div");
    n.out = value(a);
    for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] /= value(b)[i];
    n.requires_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

template <class T>
int Tape<T>::exp_op(int x) {
    OpNode<T> n;
    n.kind = OpKind::Exp;
    n.in0 = x;
    n.out = elementwise_unary(value(x), [](double v) { return std::exp(v); });
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::ln_clamped(int x, double lo, double hi) {
    OpNode<T> n;
    n.kind = OpKind::LnClamped;
    n.in0 = x;
    n.s0 = lo;
    n.s1 = hi;
    const Tensor<T>& v = value(x);
    n.out = Tensor<T>::zeros(v.shape);
    for (std::int64_t i = 0; i < v.numel(); ++i) {
        const double raw = static_cast<double>(v[i]);
        // NaN must pass through, otherwise the clamp would hide numerical
        // blow-ups from the trainer's finiteness check.
        const double c = std::isnan(raw) ? raw : std::min(hi, std::max(lo, raw));
        n.out[i] = static_cast<T>(std::log(c));
    }
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::pow_const(int x, double exponent) {
    OpNode<T> n;
    n.kind = OpKind::PowConst;
    n.in0 = x;
    n.s0 = exponent;
    const Tensor<T>& v = value(x);
    n.out = Tensor<T>::zeros(v.shape);
    for (std::int64_t i = 0; i < v.numel(); ++i)
        n.out[i] = static_cast<T>(std::pow(static_cast<double>(v[i]), exponent));
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::scale(int x, double s) {
    OpNode<T> n;
    n.kind = OpKind::Scale;
    n.in0 = x;
    n.s0 = s;
    n.out = value(x);
    for (auto& v : n.out.data) v = static_cast<T>(static_cast<double>(v) * s);
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::add_scalar(int x, double s) {
    OpNode<T> n;
    n.kind = OpKind::AddScalar;
    n.in0 = x;
    n.s0 = s;
    n.out = value(x);
    for (auto& v : n.out.data) v = static_cast<T>(static_cast<double>(v) + s);
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::mul_const_tensor(int x, Tensor<T> c) {
    OpNode<T> n;
    n.kind = OpKind::MulConstTensor;
    n.in0 = x;
    require_same_shape(value(x), c, "mul_const_tensor");
    n.const_operand = std::move(c);
    n.out = value(x);
    for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] *= n.const_operand[i];
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::add_const_tensor(int x, Tensor<T> c) {
    OpNode<T> n;
    n.kind = OpKind::AddConstTensor;
    n.in0 = x;
    require_same_shape(value(x), c, "add_const_tensor");
    n.const_operand = std::move(c);
    n.out = value(x);
    for (std::int64_t i = 0; i < n.out.numel(); ++i) n.out[i] += n.const_operand[i];
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

namespace {

// (C, voxels-per-class-stride) view of a rank-4 (C,...) or rank-5 (N,C,...)
// tensor for per-class reductions.
struct ChannelLayout {
    std::int64_t n, c, spatial;
};

template <class T>
ChannelLayout channel_layout(const Tensor<T>& t) {
    if (t.rank() == 5) return {t.size(0), t.size(1), t.size(2) * t.size(3) * t.size(4)};
    if (t.rank() == 4) return {1, t.size(0), t.size(1) * t.size(2) * t.size(3)};
    throw ConfigError("channel reduction expects rank 4 (C,D,H,W) or rank 5 (N,C,D,H,W)");
}

}  // namespace

template <class T>
int Tape<T>::channel_sums(int x) {
    OpNode<T> n;
    n.kind = OpKind::ChannelSums;
    n.in0 = x;
    const Tensor<T>& v = value(x);
    const ChannelLayout l = channel_layout(v);
    n.out = Tensor<T>::zeros({l.c});
    for (std::int64_t c = 0; c < l.c; ++c) {
        double acc = 0.0;
        for (std::int64_t b = 0; b < l.n; ++b) {
            const T* p = v.data.data() + (b * l.c + c) * l.spatial;
            for (std::int64_t i = 0; i < l.spatial; ++i) acc += static_cast<double>(p[i]);
        }
        n.out[c] = static_cast<T>(acc);
    }
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
int Tape<T>::sum_all(int x) {
    OpNode<T> n;
    n.kind = OpKind::SumAll;
    n.in0 = x;
    const Tensor<T>& v = value(x);
    double acc = 0.0;
    for (std::int64_t i = 0; i < v.numel(); ++i) acc += static_cast<double>(v[i]);
    n.out = Tensor<T>({1}, {static_cast<T>(acc)});
    n.requires_grad = needs_grad(x);
    return push(std::move(n));
}

template <class T>
void Tape<T>::accumulate(int id, const Tensor<T>& g) {
    if (id < 0) return;
    OpNode<T>& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    Tensor<T>* target = n.ext_grad;
    if (!target) {
        if (n.grad.empty()) n.grad = Tensor<T>::zeros(value(id).shape);
        target = &n.grad;
    }
    for (std::int64_t i = 0; i < g.numel(); ++i) (*target)[i] += g[i];
}

template <class T>
void Tape<T>::backward(int root) {
    backward(root, Tensor<T>({1}, {T(1)}));
}

template <class T>
void Tape<T>::backward(int root, const Tensor<T>& seed) {
    if (!value(root).same_shape(seed)) throw ConfigError("backward: seed shape must match root shape");
    accumulate(root, seed);

    // Gives the adjoints a destination to accumulate into; allocated lazily.
    auto slot = [&](int id) -> Tensor<T>* {
        if (id < 0) return nullptr;
        OpNode<T>& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad) return nullptr;
        if (n.ext_grad) return n.ext_grad;
        if (n.grad.empty()) n.grad = Tensor<T>::zeros(value(id).shape);
        return &n.grad;
    };

    for (int i = root; i >= 0; --i) {
        OpNode<T>& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || n.kind == OpKind::Leaf) continue;
        if (n.grad.empty()) continue;  // not on a path to the root
        const Tensor<T>& g = n.grad;
        switch (n.kind) {
            case OpKind::Leaf:
                break;
            case OpKind::Conv3d:
                conv3d_backward(value(n.in0), value(n.in1), g, slot(n.in0), slot(n.in1), slot(n.in2));
                break;
            case OpKind::InstanceNorm:
                instance_norm_backward(value(n.in0), value(n.in1), n.norm_cache, g, slot(n.in0),
                                       slot(n.in1), slot(n.in2));
                break;
            case OpKind::Relu:
                accumulate(n.in0, relu_backward(value(n.in0), g));
                break;
            case OpKind::MaxPool:
                accumulate(n.in0, max_pool_backward(g, n.argmax, value(n.in0).shape));
                break;
            case OpKind::Upsample:
                accumulate(n.in0, upsample_nearest_backward(g, n.window, value(n.in0).shape));
                break;
            case OpKind::ConcatChannels: {
                const Tensor<T>& a = value(n.in0);
                const Tensor<T>& b = value(n.in1);
                const std::int64_t N = a.size(0), Ca = a.size(1), Cb = b.size(1);
                const std::int64_t spatial = a.size(2) * a.size(3) * a.size(4);
                if (needs_grad(n.in0)) {
                    Tensor<T> ga = Tensor<T>::zeros(a.shape);
                    for (std::int64_t bn = 0; bn < N; ++bn)
                        std::copy_n(g.data.data() + bn * (Ca + Cb) * spatial, Ca * spatial,
                                    ga.data.data() + bn * Ca * spatial);
                    accumulate(n.in0, ga);
                }
                if (needs_grad(n.in1)) {
                    Tensor<T> gb = Tensor<T>::zeros(b.shape);
                    for (std::int64_t bn = 0; bn < N; ++bn)
                        std::copy_n(g.data.data() + bn * (Ca + Cb) * spatial + Ca * spatial, Cb * spatial,
                                    gb.data.data() + bn * Cb * spatial);
                    accumulate(n.in1, gb);
                }
                break;
            }
            case OpKind::SoftmaxChannels:
                accumulate(n.in0, softmax_channels_backward(n.out, g));
                break;
            case OpKind::Add:
                accumulate(n.in0, g);
                accumulate(n.in1, g);
                break;
            case OpKind::Sub: {
                accumulate(n.in0, g);
                if (needs_grad(n.in1)) {
                    Tensor<T> neg = g;
                    for (auto& v : neg.data) v = -v;
                    accumulate(n.in1, neg);
                }
                break;
            }
            case OpKind::Mul: {
                if (needs_grad(n.in0)) {
                    Tensor<T> da = g;
                    const Tensor<T>& b = value(n.in1);
                    for (std::int64_t j = 0; j < da.numel(); ++j) da[j] *= b[j];
                    accumulate(n.in0, da);
                }
                if (needs_grad(n.in1)) {
                    Tensor<T> db = g;
                    const Tensor<T>& a = value(n.in0);
                    for (std::int64_t j = 0; j < db.numel(); ++j) db[j] *= a[j];
                    accumulate(n.in1, db);
                }
                break;
            }
            case OpKind::Div: {
                const Tensor<T>& b = value(n.in1);
                if (needs_grad(n.in0)) {
                    Tensor<T> da = g;
                    for (std::int64_t j = 0; j < da.numel(); ++j) da[j] /= b[j];
                    accumulate(n.in0, da);
                }
                if (needs_grad(n.in1)) {
                    Tensor<T> db = g;
                    for (std::int64_t j = 0; j < db.numel(); ++j)
                        db[j] = static_cast<T>(-static_cast<double>(g[j]) *
                                               static_cast<double>(n.out[j]) / static_cast<double>(b[j]));
                    accumulate(n.in1, db);
                }
                break;
            }
            case OpKind::Exp: {
                Tensor<T> dx = g;
                for (std::int64_t j = 0; j < dx.numel(); ++j) dx[j] *= n.out[j];
                accumulate(n.in0, dx);
                break;
            }
            case OpKind::LnClamped: {
                const Tensor<T>& x = value(n.in0);
                Tensor<T> dx = Tensor<T>::zeros(x.shape);
                for (std::int64_t j = 0; j < x.numel(); ++j) {
                    const double v = static_cast<double>(x[j]);
                    // Clamp saturation zeroes the derivative.
                    dx[j] = (v > n.s0 && v < n.s1) ? static_cast<T>(static_cast<double>(g[j]) / v) : T(0);
                }
                accumulate(n.in0, dx);
                break;
            }
            case OpKind::PowConst: {
                const Tensor<T>& x = value(n.in0);
                Tensor<T> dx = Tensor<T>::zeros(x.shape);
                if (n.s0 == 1.0) {
                    dx = g;
                } else {
                    for (std::int64_t j = 0; j < x.numel(); ++j)
                        dx[j] = static_cast<T>(static_cast<double>(g[j]) * n.s0 *
                                               std::pow(static_cast<double>(x[j]), n.s0 - 1.0));
                }
                accumulate(n.in0, dx);
                break;
            }
            case OpKind::Scale: {
                Tensor<T> dx = g;
                for (auto& v : dx.data) v = static_cast<T>(static_cast<double>(v) * n.s0);
                accumulate(n.in0, dx);
                break;
            }
            case OpKind::AddScalar:
            case OpKind::AddConstTensor:
                accumulate(n.in0, g);
                break;
            case OpKind::MulConstTensor: {
                Tensor<T> dx = g;
                for (std::int64_t j = 0; j < dx.numel(); ++j) dx[j] *= n.const_operand[j];
                accumulate(n.in0, dx);
                break;
            }
            case OpKind::ChannelSums: {
                const Tensor<T>& x = value(n.in0);
                const ChannelLayout l = channel_layout(x);
                Tensor<T> dx = Tensor<T>::zeros(x.shape);
                for (std::int64_t c = 0; c < l.c; ++c)
                    for (std::int64_t b = 0; b < l.n; ++b) {
                        T* p = dx.data.data() + (b * l.c + c) * l.spatial;
                        for (std::int64_t j = 0; j < l.spatial; ++j) p[j] = g[c];
                    }
                accumulate(n.in0, dx);
                break;
            }
            case OpKind::SumAll: {
                const Tensor<T>& x = value(n.in0);
                accumulate(n.in0, Tensor<T>::full(x.shape, g[0]));
                break;
            }
        }
    }
}

template <class T>
double grad_check(const std::function<int(Tape<T>&, const std::vector<int>&)>& build,
                  const std::vector<Tensor<T>>& inputs, double eps) {
    Tape<T> tape;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) ids.push_back(tape.input(in));
    const int root = build(tape, ids);
    if (tape.value(root).numel() != 1) throw ConfigError("grad_check: graph output must be scalar");
    tape.backward(root);

    std::vector<Tensor<T>> analytic;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor<T>& g = tape.grad(ids[i]);
        analytic.push_back(g.empty() ? Tensor<T>::zeros(inputs[i].shape) : g);
    }

    auto eval = [&](const std::vector<Tensor<T>>& xs) {
        Tape<T> t;
        std::vector<int> jds;
        jds.reserve(xs.size());
        for (const auto& x : xs) jds.push_back(t.input(x));
        return t.scalar_value(build(t, jds));
    };

    std::vector<Tensor<T>> work = inputs;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < work.size(); ++i) {
        for (std::int64_t j = 0; j < work[i].numel(); ++j) {
            const T orig = work[i][j];
            work[i][j] = static_cast<T>(static_cast<double>(orig) + eps);
            const double fp = eval(work);
            work[i][j] = static_cast<T>(static_cast<double>(orig) - eps);
            const double fm = eval(work);
            work[i][j] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = static_cast<double>(analytic[i][j]);
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

template class Tape<float>;
template class Tape<double>;
template double grad_check<float>(const std::function<int(Tape<float>&, const std::vector<int>&)>&,
                                  const std::vector<Tensor<float>>&, double);
template double grad_check<double>(const std::function<int(Tape<double>&, const std::vector<int>&)>&,
                                   const std::vector<Tensor<double>>&, double);

}  // namespace sepseg
