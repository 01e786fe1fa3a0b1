#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "sepseg/error.hpp"

namespace sepseg {

// Dense row-major array with up to 5 axes, conventionally (N, C, D, H, W).
// T is double in tests and float in training; every reduction in the kernels
// accumulates in double regardless of T.
template <class T>
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> shape_, std::vector<T> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        check();
    }

    static Tensor zeros(std::vector<std::int64_t> shape_) {
        std::int64_t n = 1;
        for (auto s : shape_) n *= s;
        return Tensor(std::move(shape_), std::vector<T>(static_cast<std::size_t>(n), T(0)));
    }

    static Tensor full(std::vector<std::int64_t> shape_, T value) {
        std::int64_t n = 1;
        for (auto s : shape_) n *= s;
        return Tensor(std::move(shape_), std::vector<T>(static_cast<std::size_t>(n), value));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t size(int axis) const { return shape[static_cast<std::size_t>(axis)]; }
    bool empty() const { return data.empty(); }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

private:
    void check() const {
        if (shape.empty() || shape.size() > 5) throw ConfigError("tensor rank must be 1..5");
        std::int64_t n = 1;
        for (auto s : shape) {
            if (s < 1) throw ConfigError("tensor axes must be >= 1");
            n *= s;
        }
        if (n != static_cast<std::int64_t>(data.size()))
            throw ConfigError("tensor data length does not match shape product");
    }
};

// Cast helper; exact when widening float -> double.
template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
    std::vector<To> data(t.data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<To>(t.data[i]);
    return Tensor<To>(t.shape, std::move(data));
}

}  // namespace sepseg
