#pragma once

#include <functional>
#include <vector>

#include "sepseg/kernels.hpp"
#include "sepseg/tensor.hpp"

namespace sepseg {

// Reverse-mode autodiff over a linear tape of OpNodes. A node records its op
// kind, input node ids, the output tensor, and whatever the adjoint needs
// (pool argmax, normalization statistics, constant operands). backward()
// walks the tape in reverse and accumulates gradients; external leaves can
// bind caller-owned value/gradient storage, which is how model parameters
// receive their gradients without copies.
enum class OpKind {
    Leaf,
    Conv3d,
    InstanceNorm,
    Relu,
    MaxPool,
    Upsample,
    ConcatChannels,
    SoftmaxChannels,
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    LnClamped,
    PowConst,
    Scale,
    AddScalar,
    MulConstTensor,
    AddConstTensor,
    ChannelSums,
    SumAll,
};

template <class T>
struct OpNode {
    OpKind kind = OpKind::Leaf;
    int in0 = -1, in1 = -1, in2 = -1;
    Tensor<T> out;
    Tensor<T> grad;
    bool requires_grad = false;

    // External leaf binding (non-owning).
    const Tensor<T>* ext_value = nullptr;
    Tensor<T>* ext_grad = nullptr;

    // Saved activations / parameters for the adjoint.
    double s0 = 0.0, s1 = 0.0;
    Window3 window;
    std::vector<std::int64_t> argmax;
    InstanceNormCache norm_cache;
    Tensor<T> const_operand;
};

template <class T>
class Tape {
public:
    // Leaf bound to caller-owned storage. If grad_sink is non-null it must
    // already have the value's shape; gradients are accumulated into it.
    int leaf(const Tensor<T>* value, Tensor<T>* grad_sink);
    // Owned leaf participating in differentiation; grad readable afterward.
    int input(Tensor<T> value);
    // Owned leaf excluded from differentiation.
    int constant(Tensor<T> value);

    int conv3d_op(int x, int k, int bias);
    int instance_norm_op(int x, int gamma, int beta, double eps);
    int relu_op(int x);
    int max_pool_op(int x, Window3 window);
    int upsample_op(int x, Window3 factor);
    int concat_op(int a, int b);
    int softmax_op(int x);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int div(int a, int b);
    int exp_op(int x);
    int ln_clamped(int x, double lo, double hi);
    int pow_const(int x, double exponent);
    int scale(int x, double s);
    int add_scalar(int x, double s);
    int mul_const_tensor(int x, Tensor<T> c);
    int add_const_tensor(int x, Tensor<T> c);

    // Sum over every axis but the channel axis: rank-5 input (N,C,D,H,W) or
    // rank-4 (C,D,H,W) -> shape (C).
    int channel_sums(int x);
    int sum_all(int x);  // -> shape (1)

    const Tensor<T>& value(int id) const;
    double scalar_value(int id) const;

    // Seed 1 at a scalar root, or an explicit cotangent at any node, then
    // sweep the tape in reverse.
    void backward(int root);
    void backward(int root, const Tensor<T>& seed);

    const Tensor<T>& grad(int id) const;
    std::size_t size() const { return nodes_.size(); }

private:
    int push(OpNode<T> node);
    void accumulate(int id, const Tensor<T>& g);
    bool needs_grad(int id) const { return id >= 0 && nodes_[static_cast<std::size_t>(id)].requires_grad; }

    std::vector<OpNode<T>> nodes_;
};

// Central-difference gradient check. build must append ops to the given tape
// and return a scalar root; it is called many times and must be pure. Leaf
// ids handed to build correspond to the inputs, in order. Returns the
// maximum of |analytic - numeric| / max(1, |analytic|, |numeric|).
template <class T>
double grad_check(const std::function<int(Tape<T>&, const std::vector<int>&)>& build,
                  const std::vector<Tensor<T>>& inputs, double eps);

}  // namespace sepseg
