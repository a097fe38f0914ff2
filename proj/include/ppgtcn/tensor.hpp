#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "ppgtcn/errors.hpp"

namespace ppgtcn {

/// Dense row-major float32 tensor. data.size() == product(shape) always.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0f) {}

    Tensor(std::vector<int> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_numel(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string());
        }
    }

    /// Rank-1 tensor from literal values.
    static Tensor row(std::vector<float> values) {
        const int n = static_cast<int>(values.size());
        return Tensor({n}, std::move(values));
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, float value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    const std::vector<int>& shape() const noexcept { return shape_; }
    int dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::vector<float>& vec() noexcept { return data_; }
    const std::vector<float>& vec() const noexcept { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // Rank-specific accessors for the layouts used by the kernels.
    float& at2(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    float at2(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    float& at3(int i, int j, int k) {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    float at3(int i, int j, int k) const {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    bool all_finite() const noexcept;

private:
    static std::size_t checked_numel(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw DimensionError("non-positive tensor dimension " + std::to_string(d));
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

} // namespace ppgtcn
