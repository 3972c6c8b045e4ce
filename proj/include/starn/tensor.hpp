#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "starn/error.hpp"

namespace starn::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

// Dense row-major tensor. Rank-2 views treat the last dimension as columns
// and every leading dimension as rows.
template <typename T>
class Tensor {
public:
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatrixMap = Eigen::Map<Matrix>;
    using ConstMatrixMap = Eigen::Map<const Matrix>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_)) {
            throw DimensionError("tensor: " + std::to_string(data_.size()) + " values for shape " +
                                 shape_str(shape_));
        }
    }

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    template <typename Derived>
    static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
        Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
        t.matrix() = m.template cast<T>();
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
    std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
    ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

    Tensor reshaped(Shape s) const {
        if (shape_size(s) != size()) {
            throw DimensionError("reshape: " + shape_str(shape_) + " -> " + shape_str(s));
        }
        return Tensor(std::move(s), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

}  // namespace starn::ad
