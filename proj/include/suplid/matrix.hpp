#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "suplid/tensor.hpp"

namespace suplid {

// Read-only row-major [rows, cols] view over f32 storage.
class MatrixView {
public:
    MatrixView() = default;
    MatrixView(std::span<const float> data, std::size_t rows, std::size_t cols)
        : data_(data), rows_(rows), cols_(cols) {
        if (data.size() != rows * cols) throw ValidationError("matrix view: data size does not match rows x cols");
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<const float> row(std::size_t i) const { return data_.subspan(i * cols_, cols_); }
    std::span<const float> data() const { return data_; }

private:
    std::span<const float> data_;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
};

// Owning row-major f32 matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows * cols) throw ValidationError("matrix: data size does not match rows x cols");
    }

    // Views a rank-2 f32 tensor, or flattens the leading axes of a rank-3 one.
    static MatrixView view(const Tensor& t);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<float> row(std::size_t i) { return std::span(data_).subspan(i * cols_, cols_); }
    std::span<const float> row(std::size_t i) const { return std::span(data_).subspan(i * cols_, cols_); }
    float& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    float operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    operator MatrixView() const { return MatrixView(data_, rows_, cols_); }

    Tensor to_tensor() const { return Tensor(Shape{rows_, cols_}, data_); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

inline MatrixView Matrix::view(const Tensor& t) {
    if (t.dtype() != DType::f32 || t.ndim() < 2)
        throw ValidationError("expected an f32 tensor of rank >= 2, got " + std::string(dtype_name(t.dtype())) + ' ' +
                              shape_string(t.shape()));
    const std::size_t cols = t.shape().back();
    return MatrixView(t.data<float>(), t.size() / cols, cols);
}

}  // namespace suplid
