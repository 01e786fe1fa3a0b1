#include "sepseg/optim.hpp"

#include <cmath>

namespace sepseg {

template <class T>
AdamState<T> make_adam_state(const Model<T>& model) {
    AdamState<T> s;
    s.m.reserve(model.params.size());
    s.v.reserve(model.params.size());
    for (const auto& p : model.params) {
        s.m.push_back(Tensor<T>::zeros(p.shape));
        s.v.push_back(Tensor<T>::zeros(p.shape));
    }
    return s;
}

template <class T>
void adam_step(Model<T>& model, AdamState<T>& state, double lr, double weight_decay) {
    if (state.m.size() != model.params.size())
        throw ConfigError("adam_step: state does not match the model");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        Tensor<T>& theta = model.params[i];
        const Tensor<T>& grad = model.grads[i];
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        for (std::int64_t j = 0; j < theta.numel(); ++j) {
            const double g = static_cast<double>(grad[j]) + weight_decay * static_cast<double>(theta[j]);
            const double mj = state.beta1 * static_cast<double>(m[j]) + (1.0 - state.beta1) * g;
            const double vj = state.beta2 * static_cast<double>(v[j]) + (1.0 - state.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            theta[j] = static_cast<T>(static_cast<double>(theta[j]) -
                                      lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

#define SEPSEG_OPTIM_INSTANTIATE(T)                            \
    template struct AdamState<T>;                              \
    template AdamState<T> make_adam_state<T>(const Model<T>&); \
    template void adam_step<T>(Model<T>&, AdamState<T>&, double, double);

SEPSEG_OPTIM_INSTANTIATE(float)
SEPSEG_OPTIM_INSTANTIATE(double)
#undef SEPSEG_OPTIM_INSTANTIATE

}  // namespace sepseg
