#pragma once

#include "tddn/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace tddn {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline std::size_t shape_count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Cache-line aligned storage. Vectorized Eigen kernels peel a different
/// number of leading elements depending on the base address, which changes
/// the summation order; a fixed alignment keeps results bit-reproducible.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    template <typename U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{Align})); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{Align}); }

    template <typename U>
    bool operator==(const AlignedAllocator<U, Align>&) const {
        return true;
    }
};

/// Dense row-major array of doubles with up to three axes.
class Tensor {
    using Storage = std::vector<double, AlignedAllocator<double>>;

public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        if (shape_.empty() || shape_.size() > 3) {
            throw ShapeError("tensor rank must be 1..3, got " + std::to_string(shape_.size()));
        }
        data_.assign(shape_count(shape_), fill);
    }

    Tensor(Shape shape, const std::vector<double>& values)
        : Tensor(std::move(shape), Storage(values.begin(), values.end())) {}

    Tensor(Shape shape, Storage values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (shape_.empty() || shape_.size() > 3) {
            throw ShapeError("tensor rank must be 1..3, got " + std::to_string(shape_.size()));
        }
        if (data_.size() != shape_count(shape_)) {
            throw ShapeError("tensor " + shape_str(shape_) + " needs " +
                             std::to_string(shape_count(shape_)) + " values, got " +
                             std::to_string(data_.size()));
        }
    }

    static Tensor vector(std::initializer_list<double> v) {
        return Tensor({v.size()}, Storage(v));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    /// Same values, new shape of identical element count.
    Tensor reshaped(Shape s) const {
        if (shape_count(s) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        }
        return Tensor(std::move(s), data_);
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    Storage data_;
};

/// A learnable array with its accumulated gradient.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(0.0); }
};

inline void require_shape(const Tensor& t, const Shape& expected, const char* what) {
    if (t.shape() != expected) {
        throw ShapeError(std::string(what) + ": expected " + shape_str(expected) + ", got " +
                         shape_str(t.shape()));
    }
}

} // namespace tddn
