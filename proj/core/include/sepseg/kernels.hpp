#pragma once

#include <vector>

#include "sepseg/tensor.hpp"

namespace sepseg {

// Forward/adjoint numeric kernels on (N, C, D, H, W) tensors. Conventions:
//  - convolution is cross-correlation (no kernel flip), stride 1, zero
//    "same" padding, odd kernel extents only;
//  - reductions accumulate in double;
//  - everything is pure and single-threaded unless kernel_threads(>1) is set,
//    and parallel slices write disjoint outputs so results do not depend on
//    the thread count.

struct Window3 {
    std::int64_t d = 1, h = 1, w = 1;
};

// Global worker count for the convolution kernels (the only hot spot).
void set_kernel_threads(int n);
int kernel_threads();

// x: (N,Cin,D,H,W), k: (Cout,Cin,kd,kh,kw), bias: (Cout) -> (N,Cout,D,H,W)
template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias);

// Any of dx/dk/dbias may be null when that gradient is not needed.
template <class T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>* dk, Tensor<T>* dbias);

// Normalizes over (D,H,W) per (n,c) slice with population variance, then
// applies the per-channel affine (gamma, beta).
struct InstanceNormCache {
    std::vector<double> mean, inv_std;  // one entry per (n,c)
};

template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps,
                        InstanceNormCache* cache);

template <class T>
void instance_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const InstanceNormCache& cache,
                            const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dgamma, Tensor<T>* dbeta);

template <class T>
Tensor<T> relu(const Tensor<T>& x);

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

// Window must divide the spatial dims. argmax (when non-null) receives the
// linear index into x of each output's maximum; ties go to the lowest
// linear index so the adjoint is deterministic.
template <class T>
Tensor<T> max_pool(const Tensor<T>& x, Window3 window, std::vector<std::int64_t>* argmax);

template <class T>
Tensor<T> max_pool_backward(const Tensor<T>& dy, const std::vector<std::int64_t>& argmax,
                            const std::vector<std::int64_t>& x_shape);

template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, Window3 factor);

template <class T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy, Window3 factor,
                                    const std::vector<std::int64_t>& x_shape);

// Concatenate along the channel axis; all other axes must match.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Per-voxel softmax across the channel axis (numerically stabilized).
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x);

template <class T>
Tensor<T> softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& dy);

}  // namespace sepseg
