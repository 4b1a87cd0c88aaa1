#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace smile {

/// Dense real vector with 64-bit storage.
class DenseVector {
public:
    DenseVector() = default;
    explicit DenseVector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    explicit DenseVector(std::vector<double> data) : data_(std::move(data)) {}
    DenseVector(std::initializer_list<double> values) : data_(values) {}

    std::size_t dim() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    bool operator==(const DenseVector&) const = default;

private:
    std::vector<double> data_;
};

/// Dense real matrix, row-major, 64-bit storage. Shape is at least 1x1.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix diagonal(const DenseVector& d);
    static DenseMatrix from_columns(std::span<const DenseVector> columns);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::string shape_string() const;

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    DenseVector column(std::size_t c) const;

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Elementary operations. All shape checks throw smile::Error(ErrorKind::Shape).

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ b without forming the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseVector matvec(const DenseMatrix& a, const DenseVector& x);
/// aᵀ x without forming the transpose.
DenseVector matvec_t(const DenseMatrix& a, const DenseVector& x);

DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double s);
DenseVector add(const DenseVector& a, const DenseVector& b);
DenseVector sub(const DenseVector& a, const DenseVector& b);
DenseVector scale(const DenseVector& a, double s);

/// Copies columns [begin, end) into a new matrix. An empty range yields rows x 0.
DenseMatrix column_slice(const DenseMatrix& a, std::size_t begin, std::size_t end);
DenseMatrix outer(const DenseVector& u, const DenseVector& v);

/// tr(a bᵀ) = sum_ij a_ij b_ij
double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm(const DenseMatrix& a);
double dot(const DenseVector& a, const DenseVector& b);
double l2_norm(const DenseVector& v);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
double max_abs_diff(const DenseVector& a, const DenseVector& b);

bool all_finite(std::span<const double> values) noexcept;

} // namespace smile
