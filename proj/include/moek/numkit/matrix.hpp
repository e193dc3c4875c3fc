#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace moek::numkit {

/// Dense row-major matrix of doubles. Constructors reject non-finite entries.
class Matrix
{
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Matrix transposed() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Lower-triangular factor produced by cholesky(); entries above the diagonal are zero.
class LowerTriangular
{
public:
    explicit LowerTriangular(Matrix m) : m_(std::move(m)) {}

    std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t r, std::size_t c) const noexcept { return m_(r, c); }
    const Matrix& matrix() const noexcept { return m_; }

private:
    Matrix m_;
};

Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
bool is_symmetric(const Matrix& m, double tol);

} // namespace moek::numkit
