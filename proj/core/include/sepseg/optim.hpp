#pragma once

#include <cstdint>
#include <vector>

#include "sepseg/network.hpp"

namespace sepseg {

// Canonical Adam with bias correction; weight decay enters as a classic
// additive L2 term on the gradient (g + wd * theta), not decoupled decay.
template <class T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Tensor<T>> m;  // first moments, shaped like the parameters
    std::vector<Tensor<T>> v;  // second moments
};

template <class T>
AdamState<T> make_adam_state(const Model<T>& model);

// One update from the gradients currently in model.grads.
template <class T>
void adam_step(Model<T>& model, AdamState<T>& state, double lr, double weight_decay);

}  // namespace sepseg
