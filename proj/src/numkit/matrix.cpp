#include "moek/numkit/matrix.hpp"

#include "moek/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace moek::numkit {

namespace {

void require_finite(std::span<const double> values)
{
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw DomainError("non-finite matrix entry at flat index " + std::to_string(i));
    }
}

void require_same_shape(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data))
{
    if (data_.size() != rows_ * cols_)
        throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
    require_finite(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
{
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_)
            throw ShapeError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
    require_finite(data_);
}

Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> values)
{
    require_finite(values);
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        m(i, i) = values[i];
    return m;
}

Matrix Matrix::transposed() const
{
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c)
            t(c, r) = (*this)(r, c);
    return t;
}

Matrix operator-(const Matrix& a, const Matrix& b)
{
    require_same_shape(a, b);
    Matrix out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = x[i] - y[i];
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b)
{
    require_same_shape(a, b);
    Matrix out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = x[i] + y[i];
    return out;
}

Matrix operator*(double s, const Matrix& a)
{
    Matrix out = a;
    for (double& v : out.data())
        v *= s;
    return out;
}

double frobenius_norm(const Matrix& m)
{
    double acc = 0.0;
    for (double v : m.data())
        acc += v * v;
    return std::sqrt(acc);
}

double max_abs(const Matrix& m)
{
    double best = 0.0;
    for (double v : m.data())
        best = std::max(best, std::abs(v));
    return best;
}

bool is_symmetric(const Matrix& m, double tol)
{
    if (!m.square())
        return false;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = r + 1; c < m.cols(); ++c)
            if (std::abs(m(r, c) - m(c, r)) > tol)
                return false;
    return true;
}

} // namespace moek::numkit
