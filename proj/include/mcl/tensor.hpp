#pragma once

#include "mcl/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mcl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape, char sep = 'x') {
    std::ostringstream os;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k) os << sep;
        os << shape[k];
    }
    return os.str();
}

/// Row-major strides (last index fastest).
inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t k = shape.size(); k-- > 1;) strides[k - 1] = strides[k] * shape[k];
    return strides;
}

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (rows == 0 || cols == 0) throw Error(ErrorKind::shape, "matrix extents must be positive");
    }
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows == 0 || cols == 0) throw Error(ErrorKind::shape, "matrix extents must be positive");
        if (data_.size() != rows * cols)
            throw Error(ErrorKind::shape, "matrix data length does not match rows*cols");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    [[nodiscard]] Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error(ErrorKind::shape, "matmul inner dimension mismatch");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double aip = a(i, p);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aip * b(p, j);
        }
    return out;
}

inline double frobenius_norm(std::span<const double> values) {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

/// Dense row-major tensor of doubles with rank >= 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(shape_size(shape_), fill);
    }
    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != shape_size(shape_))
            throw Error(ErrorKind::shape, "tensor data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_string(shape_));
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    [[nodiscard]] std::size_t offset(std::span<const std::size_t> index) const {
        std::size_t off = 0;
        for (std::size_t k = 0; k < shape_.size(); ++k) off = off * shape_[k] + index[k];
        return off;
    }
    double& at(std::initializer_list<std::size_t> index) {
        return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
    }
    [[nodiscard]] double at(std::initializer_list<std::size_t> index) const {
        return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
    }

    [[nodiscard]] double norm() const { return frobenius_norm(data_); }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    void validate_shape() const {
        if (shape_.empty()) throw Error(ErrorKind::shape, "tensor rank must be >= 1");
        for (auto e : shape_)
            if (e == 0) throw Error(ErrorKind::shape, "tensor extents must be >= 1");
    }

    Shape shape_;
    std::vector<double> data_;
};

namespace detail {

// Column order of the mode-k unfolding: modes k+1, ..., K-1, 0, ..., k-1 with the
// last listed mode varying fastest.
inline std::vector<std::size_t> unfold_column_modes(std::size_t rank, std::size_t k) {
    std::vector<std::size_t> modes;
    for (std::size_t j = k + 1; j < rank; ++j) modes.push_back(j);
    for (std::size_t j = 0; j < k; ++j) modes.push_back(j);
    return modes;
}

// Visits every element of `shape` in row-major order, passing the running multi-index.
template <typename F>
void for_each_index(const Shape& shape, F&& fn) {
    std::vector<std::size_t> idx(shape.size(), 0);
    const std::size_t total = shape_size(shape);
    for (std::size_t flat = 0; flat < total; ++flat) {
        fn(flat, std::span<const std::size_t>(idx));
        for (std::size_t k = shape.size(); k-- > 0;) {
            if (++idx[k] < shape[k]) break;
            idx[k] = 0;
        }
    }
}

inline void check_mode(const Shape& shape, std::size_t k) {
    if (k >= shape.size())
        throw Error(ErrorKind::mode_index, "mode " + std::to_string(k) + " out of range for rank " +
                                               std::to_string(shape.size()));
}

inline std::pair<std::size_t, std::size_t> outer_inner(const Shape& shape, std::size_t k) {
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t j = 0; j < k; ++j) outer *= shape[j];
    for (std::size_t j = k + 1; j < shape.size(); ++j) inner *= shape[j];
    return {outer, inner};
}

}  // namespace detail

/// Mode-k matricization: rows index mode k, columns enumerate the remaining
/// modes in cyclic order k+1, ..., K-1, 0, ..., k-1 (last fastest).
inline Matrix mode_unfold(const Tensor& t, std::size_t k) {
    const auto& shape = t.shape();
    detail::check_mode(shape, k);
    const auto col_modes = detail::unfold_column_modes(shape.size(), k);
    const std::size_t cols = t.size() / shape[k];
    Matrix m(shape[k], cols);
    detail::for_each_index(shape, [&](std::size_t flat, std::span<const std::size_t> idx) {
        std::size_t col = 0;
        for (auto j : col_modes) col = col * shape[j] + idx[j];
        m(idx[k], col) = t[flat];
    });
    return m;
}

/// Inverse of mode_unfold.
inline Tensor mode_fold(const Matrix& m, std::size_t k, const Shape& target_shape) {
    detail::check_mode(target_shape, k);
    const std::size_t total = shape_size(target_shape);
    if (m.rows() != target_shape[k] || m.rows() * m.cols() != total)
        throw Error(ErrorKind::shape, "matrix " + std::to_string(m.rows()) + "x" +
                                          std::to_string(m.cols()) + " cannot fold into " +
                                          shape_string(target_shape) + " along mode " +
                                          std::to_string(k));
    const auto col_modes = detail::unfold_column_modes(target_shape.size(), k);
    Tensor t(target_shape);
    detail::for_each_index(target_shape, [&](std::size_t flat, std::span<const std::size_t> idx) {
        std::size_t col = 0;
        for (auto j : col_modes) col = col * target_shape[j] + idx[j];
        t[flat] = m(idx[k], col);
    });
    return t;
}

/// Z = t x_k a, i.e. Z[..., j, ...] = sum_i a(j, i) * t[..., i, ...].
inline Tensor mode_product(const Tensor& t, const Matrix& a, std::size_t k) {
    const auto& shape = t.shape();
    detail::check_mode(shape, k);
    if (a.cols() != shape[k])
        throw Error(ErrorKind::shape, "mode-" + std::to_string(k) + " product: matrix has " +
                                          std::to_string(a.cols()) + " columns, tensor extent is " +
                                          std::to_string(shape[k]));
    Shape out_shape = shape;
    out_shape[k] = a.rows();
    Tensor out(out_shape);
    const auto [outer, inner] = detail::outer_inner(shape, k);
    const std::size_t in_k = shape[k];
    const std::size_t out_k = a.rows();
    const double* src = t.data().data();
    double* dst = out.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
        const double* src_block = src + o * in_k * inner;
        double* dst_block = dst + o * out_k * inner;
        for (std::size_t j = 0; j < out_k; ++j) {
            double* dst_row = dst_block + j * inner;
            for (std::size_t i = 0; i < in_k; ++i) {
                const double aji = a(j, i);
                const double* src_row = src_block + i * inner;
                for (std::size_t n = 0; n < inner; ++n) dst_row[n] += aji * src_row[n];
            }
        }
    }
    return out;
}

struct ModeMatrix {
    Matrix matrix;
    std::size_t mode;
};

/// Applies the mode products in list order; modes must be distinct.
inline Tensor multi_mode_product(const Tensor& t, std::span<const ModeMatrix> mats) {
    std::vector<bool> seen(t.rank(), false);
    for (const auto& mm : mats) {
        detail::check_mode(t.shape(), mm.mode);
        if (seen[mm.mode])
            throw Error(ErrorKind::argument, "duplicate mode " + std::to_string(mm.mode));
        seen[mm.mode] = true;
    }
    Tensor out = t;
    for (const auto& mm : mats) out = mode_product(out, mm.matrix, mm.mode);
    return out;
}

/// Leading block t[0:m_1, ..., 0:m_K]. Copies contiguous runs along the last mode.
inline Tensor subtensor_prefix(const Tensor& t, const Shape& dims) {
    const auto& shape = t.shape();
    if (dims.size() != shape.size())
        throw Error(ErrorKind::dims, "prefix dims rank " + std::to_string(dims.size()) +
                                         " does not match tensor rank " + std::to_string(shape.size()));
    for (std::size_t k = 0; k < dims.size(); ++k)
        if (dims[k] < 1 || dims[k] > shape[k])
            throw Error(ErrorKind::dims, "prefix dims " + shape_string(dims) + " outside tensor shape " +
                                             shape_string(shape));
    Tensor out(dims);
    const std::size_t run = dims.back();
    if (dims.size() == 1) {
        std::copy_n(t.data().begin(), run, out.data().begin());
        return out;
    }
    Shape lead(dims.begin(), dims.end() - 1);
    const auto src_strides = row_major_strides(shape);
    detail::for_each_index(lead, [&](std::size_t flat, std::span<const std::size_t> idx) {
        std::size_t src_off = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) src_off += idx[k] * src_strides[k];
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(src_off), run,
                    out.data().begin() + static_cast<std::ptrdiff_t>(flat * run));
    });
    return out;
}

/// Places t in the leading corner of a zero tensor of target_shape.
inline Tensor zero_pad_to(const Tensor& t, const Shape& target_shape) {
    const auto& shape = t.shape();
    if (target_shape.size() != shape.size())
        throw Error(ErrorKind::shape, "zero-pad target rank mismatch");
    for (std::size_t k = 0; k < shape.size(); ++k)
        if (shape[k] > target_shape[k])
            throw Error(ErrorKind::shape, "zero-pad target " + shape_string(target_shape) +
                                              " smaller than tensor " + shape_string(shape));
    Tensor out(target_shape);
    const std::size_t run = shape.back();
    if (shape.size() == 1) {
        std::copy_n(t.data().begin(), run, out.data().begin());
        return out;
    }
    Shape lead(shape.begin(), shape.end() - 1);
    const auto dst_strides = row_major_strides(target_shape);
    detail::for_each_index(lead, [&](std::size_t flat, std::span<const std::size_t> idx) {
        std::size_t dst_off = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) dst_off += idx[k] * dst_strides[k];
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(flat * run), run,
                    out.data().begin() + static_cast<std::ptrdiff_t>(dst_off));
    });
    return out;
}

/// Hadamard product.
inline Tensor elementwise_mul(const Tensor& t, const Tensor& b) {
    if (t.shape() != b.shape())
        throw Error(ErrorKind::shape, "elementwise product of " + shape_string(t.shape()) + " and " +
                                          shape_string(b.shape()));
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] * b[i];
    return out;
}

}  // namespace mcl
