#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepcross {

using Shape = std::vector<std::size_t>;

/// Thrown when operand extents do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape);

/**
 * Dense row-major n-dimensional array.
 *
 * The storage is a flat vector; two-dimensional views are exposed as Eigen
 * maps so callers can use Eigen expressions on them directly.
 */
template <typename Scalar>
class BasicTensor {
public:
    using value_type = Scalar;
    using MatrixMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstMatrixMap =
        Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using VectorMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
    using ConstVectorMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

    BasicTensor() : shape_{1}, values_(1, Scalar(0)) {}

    explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
        : shape_(std::move(shape)), values_(shape_size(shape_), fill)
    {
        check_extents();
    }

    BasicTensor(Shape shape, std::vector<Scalar> values) : shape_(std::move(shape)), values_(std::move(values))
    {
        check_extents();
        if (values_.size() != shape_size(shape_))
            throw DimensionError("tensor: " + std::to_string(values_.size()) + " values for shape " +
                                 shape_string(shape_));
    }

    static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{1}, std::vector<Scalar>{v}); }

    static BasicTensor vector(std::initializer_list<Scalar> v)
    {
        return BasicTensor(Shape{v.size()}, std::vector<Scalar>(v));
    }

    static BasicTensor matrix(std::initializer_list<std::initializer_list<Scalar>> rows)
    {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<Scalar> v;
        v.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c)
                throw DimensionError("tensor: ragged matrix literal");
            v.insert(v.end(), row.begin(), row.end());
        }
        return BasicTensor(Shape{r, c}, std::move(v));
    }

    static BasicTensor identity(std::size_t n)
    {
        BasicTensor t(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i)
            t.values_[i * n + i] = Scalar(1);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    std::span<Scalar> values() { return values_; }
    std::span<const Scalar> values() const { return values_; }
    Scalar* data() { return values_.data(); }
    const Scalar* data() const { return values_.data(); }

    Scalar& operator[](std::size_t i) { return values_[i]; }
    const Scalar& operator[](std::size_t i) const { return values_[i]; }

    Scalar& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
    const Scalar& at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }
    Scalar& at(std::size_t i, std::size_t j, std::size_t k)
    {
        return values_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const Scalar& at(std::size_t i, std::size_t j, std::size_t k) const
    {
        return values_[(i * shape_[1] + j) * shape_[2] + k];
    }

    /// Views the storage as rows x cols; rows*cols must equal size().
    MatrixMap as_matrix(std::size_t rows, std::size_t cols)
    {
        check_view(rows, cols);
        return MatrixMap(values_.data(), Eigen::Index(rows), Eigen::Index(cols));
    }
    ConstMatrixMap as_matrix(std::size_t rows, std::size_t cols) const
    {
        check_view(rows, cols);
        return ConstMatrixMap(values_.data(), Eigen::Index(rows), Eigen::Index(cols));
    }
    /// Views a rank-2 tensor as its natural matrix.
    MatrixMap matrix() { return as_matrix(shape_.at(0), shape_.at(1)); }
    ConstMatrixMap matrix() const { return as_matrix(shape_.at(0), shape_.at(1)); }
    VectorMap flat() { return VectorMap(values_.data(), Eigen::Index(values_.size())); }
    ConstVectorMap flat() const { return ConstVectorMap(values_.data(), Eigen::Index(values_.size())); }

    BasicTensor reshaped(Shape shape) const
    {
        if (shape_size(shape) != values_.size())
            throw DimensionError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
        return BasicTensor(std::move(shape), values_);
    }

    void fill(Scalar v) { std::fill(values_.begin(), values_.end(), v); }

    bool operator==(const BasicTensor&) const = default;

private:
    void check_extents() const
    {
        if (shape_.empty())
            throw DimensionError("tensor: empty shape");
        for (auto e : shape_)
            if (e == 0)
                throw DimensionError("tensor: zero extent in shape " + shape_string(shape_));
    }
    void check_view(std::size_t rows, std::size_t cols) const
    {
        if (rows * cols != values_.size())
            throw DimensionError("tensor view " + std::to_string(rows) + "x" + std::to_string(cols) +
                                 " over " + shape_string(shape_));
    }

    Shape shape_;
    std::vector<Scalar> values_;
};

using Tensor = BasicTensor<double>;

inline bool all_finite(const Tensor& t)
{
    return t.flat().allFinite();
}

/// Trainable (or frozen) named parameter with an accumulated gradient.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Tensor v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train)
    {
    }

    void zero_grad() { grad.fill(0.0); }
};

void zero_grads(std::span<Param* const> params);

/// value <- value - lr * grad for every trainable parameter.
void sgd_step(std::span<Param* const> params, double lr);

} // namespace deepcross
