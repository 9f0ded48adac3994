#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "tvpr/error.hpp"

namespace tvpr {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using MatXf = MatX<float>;
using MatXd = MatX<double>;
using VecXf = VecX<float>;
using VecXd = VecX<double>;

using Index = Eigen::Index;

// Dense row-major value tensor of rank 1..4. Carrier for images, feature maps
// and convolution kernels; 2-D views map onto Eigen matrices without copying.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<std::size_t>(size()), T(0));
    }

    Tensor(std::vector<Index> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<Index>(data_.size()) != size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape volume " + std::to_string(size()));
    }

    const std::vector<Index>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    Index extent(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }

    Index size() const {
        return std::accumulate(shape_.begin(), shape_.end(), Index(1),
                               [](Index a, Index b) { return a * b; });
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

    // rank-2 (i, j)
    T& at(Index i, Index j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    const T& at(Index i, Index j) const {
        return data_[static_cast<std::size_t>(i * shape_[1] + j)];
    }

    // rank-3 (h, w, c)
    T& at(Index h, Index w, Index c) {
        return data_[static_cast<std::size_t>((h * shape_[1] + w) * shape_[2] + c)];
    }
    const T& at(Index h, Index w, Index c) const {
        return data_[static_cast<std::size_t>((h * shape_[1] + w) * shape_[2] + c)];
    }

    // rank-4 (a, b, c, d)
    T& at(Index a, Index b, Index c, Index d) {
        return data_[static_cast<std::size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    const T& at(Index a, Index b, Index c, Index d) const {
        return data_[static_cast<std::size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }

    Eigen::Map<MatX<T>> matrix() {
        require_rank(2, "matrix view");
        return Eigen::Map<MatX<T>>(data_.data(), shape_[0], shape_[1]);
    }
    Eigen::Map<const MatX<T>> matrix() const {
        require_rank(2, "matrix view");
        return Eigen::Map<const MatX<T>>(data_.data(), shape_[0], shape_[1]);
    }

    // Flat view regardless of rank.
    Eigen::Map<VecX<T>> vec() { return Eigen::Map<VecX<T>>(data_.data(), size()); }
    Eigen::Map<const VecX<T>> vec() const {
        return Eigen::Map<const VecX<T>>(data_.data(), size());
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void require_rank(int r, const char* what) const {
        if (rank() != r)
            throw ShapeError(std::string(what) + " requires rank " + std::to_string(r) +
                             ", tensor has rank " + std::to_string(rank()));
    }

private:
    void validate_shape() {
        if (shape_.empty() || shape_.size() > 4)
            throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape_.size()));
        for (Index e : shape_)
            if (e < 1) throw ShapeError("tensor extents must be >= 1");
    }

    std::vector<Index> shape_;
    std::vector<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

} // namespace tvpr
