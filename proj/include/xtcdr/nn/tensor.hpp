// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "xtcdr/error.hpp"

namespace xtcdr::nn {

/// 64-byte aligned storage. Vectorized kernels peel loops by address, so
/// aligned buffers keep results independent of where the heap places them.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

/// Dense row-major array. Production code uses `Tensor` (f32); the f64
/// instantiation exists so numerical checks can run the same kernels at
/// higher precision.
template <class T>
class BasicTensor {
public:
    using value_type = T;
    using Storage = std::vector<T, AlignedAllocator<T>>;

    BasicTensor() = default;

    explicit BasicTensor(std::vector<std::size_t> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    BasicTensor(std::vector<std::size_t> shape, const std::vector<T>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (data_.size() != element_count(shape_))
            fail(ErrorKind::Shape, "tensor data length " + std::to_string(data_.size()) +
                                       " does not match shape product " +
                                       std::to_string(element_count(shape_)));
    }

    /// Builds a [rows.size(), width] matrix from nested rows.
    static BasicTensor from_rows(const std::vector<std::vector<T>>& rows) {
        if (rows.empty()) fail(ErrorKind::Shape, "from_rows: no rows");
        const std::size_t width = rows.front().size();
        BasicTensor out({rows.size(), width});
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != width) fail(ErrorKind::Shape, "from_rows: ragged rows");
            std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
        }
        return out;
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Leading dimension; 1 for rank-1 or rank-0 tensors.
    std::size_t rows() const noexcept { return shape_.size() >= 2 ? shape_[0] : 1; }
    /// Trailing (row) width.
    std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    Storage& values() noexcept { return data_; }
    const Storage& values() const noexcept { return data_; }
    std::vector<T> to_vector() const { return {data_.begin(), data_.end()}; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    bool all_finite() const noexcept {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const BasicTensor&) const = default;

    template <class U>
    BasicTensor<U> cast() const {
        return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
    }

private:
    std::vector<std::size_t> shape_;
    Storage data_;
};

using Tensor = BasicTensor<float>;

std::string shape_string(const std::vector<std::size_t>& shape);

template <class T>
void require_matrix(const BasicTensor<T>& t, std::size_t cols, const char* what) {
    if (t.rank() != 2 || t.cols() != cols)
        fail(ErrorKind::Shape, std::string(what) + ": expected [batch, " + std::to_string(cols) +
                                   "], got " + shape_string(t.shape()));
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        fail(ErrorKind::Shape, std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                                   " vs " + shape_string(b.shape()));
}

template <class T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "tensor add");
    BasicTensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

template <class T>
BasicTensor<T>& operator+=(BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "tensor add");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

template <class T>
BasicTensor<T> scaled(const BasicTensor<T>& a, T factor) {
    BasicTensor<T> out = a;
    for (auto& v : out.values()) v *= factor;
    return out;
}

}  // namespace xtcdr::nn
