#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vip/errors.hpp"

namespace vip {

// Dense row-major tensor. The scalar type is a compile-time choice; the
// training pipeline runs at 64-bit (required for gradient checking), the
// kernels are also instantiated at 32-bit.
template <typename T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<std::size_t> s) : shape(std::move(s)), data(numel(shape), T(0)) {}
    TensorT(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel(shape)) throw ShapeError("tensor data does not match shape");
    }

    static std::size_t numel(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // 2-d / 3-d accessors (row-major)
    T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    T& at(std::size_t c, std::size_t i, std::size_t j) {
        return data[(c * shape[1] + i) * shape[2] + j];
    }
    const T& at(std::size_t c, std::size_t i, std::size_t j) const {
        return data[(c * shape[1] + i) * shape[2] + j];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const TensorT& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

// Regularization group of a trainable tensor: phi1 covers the perception and
// aggregation layers, phi2 the decision layer.
enum class ParamGroup : std::uint8_t { phi1, phi2 };

struct ParamTensor {
    std::string name;
    Tensor tensor;
    ParamGroup group;
    bool is_bias = false;
};

// Ordered, name-unique collection of trainable tensors. Order is canonical:
// it fixes init draws, gradient layout and checkpoint layout.
struct ParamSet {
    std::vector<ParamTensor> items;

    ParamTensor& add(std::string name, std::vector<std::size_t> shape, ParamGroup group,
                     bool is_bias) {
        for (const auto& p : items)
            if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
        items.push_back({std::move(name), Tensor(std::move(shape)), group, is_bias});
        return items.back();
    }

    ParamTensor& find(const std::string& name) {
        for (auto& p : items)
            if (p.name == name) return p;
        throw ConfigError("unknown parameter: " + name);
    }
    const ParamTensor& find(const std::string& name) const {
        for (const auto& p : items)
            if (p.name == name) return p;
        throw ConfigError("unknown parameter: " + name);
    }

    std::size_t size() const { return items.size(); }

    // Matching zero gradient tensors, one per parameter, same order.
    std::vector<Tensor> zero_grads() const {
        std::vector<Tensor> g;
        g.reserve(items.size());
        for (const auto& p : items) g.emplace_back(p.tensor.shape);
        return g;
    }

    double squared_norm(ParamGroup group, bool include_biases = false) const {
        double acc = 0.0;
        for (const auto& p : items) {
            if (p.group != group) continue;
            if (p.is_bias && !include_biases) continue;
            for (double v : p.tensor.data) acc += v * v;
        }
        return acc;
    }
};

}  // namespace vip
