#include "moek/numkit/linalg.hpp"

#include "moek/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

namespace moek::numkit {

namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

std::int64_t as_index(std::size_t n) { return static_cast<std::int64_t>(n); }

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    const std::size_t n = a.rows();
    const std::size_t m = b.cols();
    const std::size_t k = a.cols();
    Matrix out(n, m);
    const bool parallel = n * m * k >= kParallelWork;

#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t ii = 0; ii < as_index(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto dst = out.row(i);
        auto lhs = a.row(i);
        // i-k-j order: each dst[j] still sums over k in ascending order.
        for (std::size_t p = 0; p < k; ++p) {
            const double av = lhs[p];
            auto rhs = b.row(p);
            for (std::size_t j = 0; j < m; ++j)
                dst[j] += av * rhs[j];
        }
    }
    return out;
}

Matrix gram(const Matrix& x)
{
    const std::size_t n = x.rows();
    const std::size_t t = x.cols();
    Matrix out(n, n);
    const bool parallel = n * n * t / 2 >= kParallelWork;

#pragma omp parallel for schedule(dynamic, 4) if (parallel)
    for (std::int64_t ii = 0; ii < as_index(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto xi = x.row(i);
        for (std::size_t j = i; j < n; ++j) {
            auto xj = x.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < t; ++p)
                acc += xi[p] * xj[p];
            out(i, j) = acc;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            out(j, i) = out(i, j);
    return out;
}

LowerTriangular cholesky(const Matrix& h)
{
    if (!h.square())
        throw ShapeError("cholesky: matrix is " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()));
    const double tol = 1e-9 * std::max(1.0, max_abs(h));
    if (!is_symmetric(h, tol))
        throw DomainError("cholesky: matrix is not symmetric");

    const std::size_t n = h.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = h(j, j);
        for (std::size_t p = 0; p < j; ++p)
            diag -= l(j, p) * l(j, p);
        if (!(diag > 0.0) || !std::isfinite(diag))
            throw NotPositiveDefinite(j, diag);
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double acc = h(i, j);
            for (std::size_t p = 0; p < j; ++p)
                acc -= l(i, p) * l(j, p);
            l(i, j) = acc / ljj;
        }
    }
    return LowerTriangular(std::move(l));
}

Matrix solve_lower(const LowerTriangular& l, const Matrix& b)
{
    const std::size_t n = l.dim();
    if (b.rows() != n)
        throw ShapeError("solve_lower: rhs has " + std::to_string(b.rows()) + " rows, factor is " +
                         std::to_string(n));
    Matrix y = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = y(i, c);
            for (std::size_t p = 0; p < i; ++p)
                acc -= l(i, p) * y(p, c);
            y(i, c) = acc / l(i, i);
        }
    }
    return y;
}

Matrix solve_upper_transposed(const LowerTriangular& l, const Matrix& b)
{
    const std::size_t n = l.dim();
    if (b.rows() != n)
        throw ShapeError("solve_upper_transposed: rhs has " + std::to_string(b.rows()) + " rows, factor is " +
                         std::to_string(n));
    Matrix x = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t ii = n; ii-- > 0;) {
            double acc = x(ii, c);
            for (std::size_t p = ii + 1; p < n; ++p)
                acc -= l(p, ii) * x(p, c);
            x(ii, c) = acc / l(ii, ii);
        }
    }
    return x;
}

Matrix spd_inverse(const Matrix& h) { return spd_inverse(cholesky(h)); }

Matrix spd_inverse(const LowerTriangular& l)
{
    const std::size_t n = l.dim();
    // h^-1 = L^-T L^-1; only the upper triangle is computed, then mirrored.
    const Matrix linv = solve_lower(l, Matrix::identity(n));
    Matrix inv(n, n);
    const bool parallel = n * n * n / 6 >= kParallelWork;

#pragma omp parallel for schedule(dynamic, 4) if (parallel)
    for (std::int64_t ii = 0; ii < as_index(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = j; p < n; ++p)
                acc += linv(p, i) * linv(p, j);
            inv(i, j) = acc;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            inv(j, i) = inv(i, j);
    return inv;
}

} // namespace moek::numkit
