#pragma once

#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uwie/common.hpp"

namespace uwie {

inline std::size_t shape_numel(std::span<const int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(std::span<const int> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major float tensor with an optional gradient buffer of the same
// shape. float for training/storage, double for gradient verification.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}

    std::size_t numel() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace uwie
