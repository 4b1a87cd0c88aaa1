#include "smile/tensor.hpp"

#include "smile/error.hpp"

#include <algorithm>
#include <cmath>

namespace smile {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Argument: return "argument";
    case ErrorKind::RankDeficient: return "rank-deficient";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::Overlap: return "overlap";
    case ErrorKind::UnknownDtype: return "unknown-dtype";
    case ErrorKind::MalformedHeader: return "malformed-header";
    case ErrorKind::Mismatch: return "mismatch";
    case ErrorKind::Training: return "training";
    }
    return "unknown";
}

namespace {

[[noreturn]] void shape_error(const char* op, const DenseMatrix& a, const DenseMatrix& b) {
    throw Error(ErrorKind::Shape, std::string(op) + ": incompatible shapes " + a.shape_string() +
                                      " and " + b.shape_string());
}

[[noreturn]] void shape_error(const char* op, std::size_t a, std::size_t b) {
    throw Error(ErrorKind::Shape, std::string(op) + ": incompatible dimensions " +
                                      std::to_string(a) + " and " + std::to_string(b));
}

} // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw Error(ErrorKind::Shape, "DenseMatrix: data length " + std::to_string(data_.size()) +
                                          " does not match shape " + shape_string());
    }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw Error(ErrorKind::Shape, "DenseMatrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::diagonal(const DenseVector& d) {
    DenseMatrix m(d.dim(), d.dim());
    for (std::size_t i = 0; i < d.dim(); ++i) m(i, i) = d[i];
    return m;
}

DenseMatrix DenseMatrix::from_columns(std::span<const DenseVector> columns) {
    if (columns.empty()) return {};
    const std::size_t rows = columns.front().dim();
    DenseMatrix m(rows, columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].dim() != rows) shape_error("from_columns", rows, columns[c].dim());
        for (std::size_t r = 0; r < rows; ++r) m(r, c) = columns[c][r];
    }
    return m;
}

std::string DenseMatrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

DenseVector DenseMatrix::column(std::size_t c) const {
    DenseVector v(rows_);
    for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
    return v;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            auto b_row = b.row(p);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aip * b_row[j];
        }
    }
    return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
    DenseMatrix out(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p) {
        auto a_row = a.row(p);
        auto b_row = b.row(p);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double api = a_row[i];
            if (api == 0.0) continue;
            auto out_row = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += api * b_row[j];
        }
    }
    return out;
}

DenseVector matvec(const DenseMatrix& a, const DenseVector& x) {
    if (a.cols() != x.dim()) shape_error("matvec", a.cols(), x.dim());
    DenseVector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

DenseVector matvec_t(const DenseMatrix& a, const DenseVector& x) {
    if (a.rows() != x.dim()) shape_error("matvec_t", a.rows(), x.dim());
    DenseVector y(a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        auto r = a.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) y[j] += r[j] * xi;
    }
    return y;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
    DenseMatrix out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return out;
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
    DenseMatrix out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    return out;
}

DenseMatrix scale(const DenseMatrix& a, double s) {
    DenseMatrix out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

DenseVector add(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) shape_error("add", a.dim(), b.dim());
    DenseVector out = a;
    for (std::size_t i = 0; i < out.dim(); ++i) out[i] += b[i];
    return out;
}

DenseVector sub(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) shape_error("sub", a.dim(), b.dim());
    DenseVector out = a;
    for (std::size_t i = 0; i < out.dim(); ++i) out[i] -= b[i];
    return out;
}

DenseVector scale(const DenseVector& a, double s) {
    DenseVector out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

DenseMatrix column_slice(const DenseMatrix& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.cols()) {
        throw Error(ErrorKind::Shape, "column_slice: range [" + std::to_string(begin) + ", " +
                                          std::to_string(end) + ") out of bounds for " +
                                          a.shape_string());
    }
    DenseMatrix out(a.rows(), end - begin);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = a(r, c);
    return out;
}

DenseMatrix outer(const DenseVector& u, const DenseVector& v) {
    DenseMatrix out(u.dim(), v.dim());
    for (std::size_t i = 0; i < u.dim(); ++i)
        for (std::size_t j = 0; j < v.dim(); ++j) out(i, j) = u[i] * v[j];
    return out;
}

double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("frobenius_inner", a, b);
    double acc = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
    return acc;
}

double frobenius_norm(const DenseMatrix& a) { return std::sqrt(frobenius_inner(a, a)); }

double dot(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) shape_error("dot", a.dim(), b.dim());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(const DenseVector& v) {
    double acc = 0.0;
    for (double x : v.values()) acc += x * x;
    return std::sqrt(acc);
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("max_abs_diff", a, b);
    double m = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
    return m;
}

double max_abs_diff(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) shape_error("max_abs_diff", a.dim(), b.dim());
    double m = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(std::span<const double> values) noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

} // namespace smile
