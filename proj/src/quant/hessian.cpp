#include "moek/quant/hessian.hpp"

#include "moek/error.hpp"
#include "moek/numkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

namespace moek::quant {

namespace {

void check_inputs(const Matrix& w, const Matrix& h, const QuantConfig& cfg, std::span<const std::size_t> order)
{
    cfg.validate();
    if (!h.square() || h.rows() != w.cols())
        throw ShapeError("hessian must be " + std::to_string(w.cols()) + "x" + std::to_string(w.cols()) + ", got " +
                         std::to_string(h.rows()) + "x" + std::to_string(h.cols()));
    if (!is_permutation(order, w.cols()))
        throw InputError("column order is not a permutation of " + std::to_string(w.cols()) + " columns");
}

Matrix permute_symmetric(const Matrix& h, std::span<const std::size_t> order)
{
    const std::size_t n = order.size();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out(i, j) = h(order[i], order[j]);
    return out;
}

double mean_diagonal(const Matrix& h)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i)
        acc += h(i, i);
    return h.rows() == 0 ? 0.0 : acc / static_cast<double>(h.rows());
}

// Upper Cholesky factor U of H^-1 (H^-1 = U^T U). Row k of U is the k-th
// column of the inverse Hessian restricted to columns k.., divided by the
// square root of its diagonal entry.
Matrix inverse_hessian_factor(const Matrix& hp)
{
    const double base = mean_diagonal(hp);
    for (int attempt = 0; attempt <= kDampingRetries; ++attempt) {
        Matrix damped = hp;
        if (attempt > 0) {
            if (!(base > 0.0) || !std::isfinite(base))
                break;
            const double lambda = kDefaultDamping * std::pow(10.0, attempt) * base;
            for (std::size_t i = 0; i < damped.rows(); ++i)
                damped(i, i) += lambda;
        }
        try {
            const auto lower = numkit::cholesky(numkit::spd_inverse(damped));
            return lower.matrix().transposed();
        } catch (const NotPositiveDefinite&) {
        }
    }
    throw QuantizationFailed("hessian is not positive definite after " + std::to_string(kDampingRetries) +
                             " damping escalations");
}

} // namespace

Matrix build_hessian(const Matrix& x, double damping_fraction)
{
    if (!(damping_fraction >= 0.0) || !std::isfinite(damping_fraction))
        throw DomainError("damping fraction must be a finite non-negative number");
    if (x.rows() == 0)
        throw InputError("calibration activations have no channels");
    if (max_abs(x) == 0.0)
        throw DegenerateHessian("calibration activations are all zero");

    Matrix h = 2.0 * numkit::gram(x);
    const double lambda = damping_fraction * mean_diagonal(h);
    for (std::size_t i = 0; i < h.rows(); ++i)
        h(i, i) += lambda;
    return h;
}

std::string_view to_string(Ordering o)
{
    switch (o) {
    case Ordering::none:
        return "none";
    case Ordering::max_abs:
        return "max_abs";
    case Ordering::sum_squares:
        return "sum_squares";
    }
    return "?";
}

Ordering parse_ordering(std::string_view s)
{
    if (s == "none")
        return Ordering::none;
    if (s == "max_abs" || s == "max-abs")
        return Ordering::max_abs;
    if (s == "sum_squares" || s == "sum-squares")
        return Ordering::sum_squares;
    throw ConfigError("unknown ordering '" + std::string(s) + "' (expected none, max_abs or sum_squares)");
}

Permutation channel_order(const Matrix& x, Ordering strategy)
{
    Permutation order(x.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (strategy == Ordering::none)
        return order;

    std::vector<double> stat(x.rows(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (double v : x.row(r))
            stat[r] = strategy == Ordering::max_abs ? std::max(stat[r], std::abs(v)) : stat[r] + v * v;

    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return stat[a] > stat[b]; });
    return order;
}

bool is_permutation(std::span<const std::size_t> order, std::size_t n)
{
    if (order.size() != n)
        return false;
    std::vector<bool> seen(n, false);
    for (std::size_t i : order) {
        if (i >= n || seen[i])
            return false;
        seen[i] = true;
    }
    return true;
}

QuantizedMatrix hessian_quantize(const Matrix& w, const Matrix& h, const QuantConfig& cfg,
                                 std::span<const std::size_t> order)
{
    check_inputs(w, h, cfg, order);
    const std::size_t rows = w.rows();
    const std::size_t n = w.cols();

    QuantizedMatrix q;
    q.rows = rows;
    q.cols = n;
    q.bits = cfg.bits;
    q.granularity = cfg.granularity;
    q.params = choose_params(w, cfg);
    q.codes.assign(rows * n, 0);
    if (n == 0)
        return q;

    const Matrix u = inverse_hessian_factor(permute_symmetric(h, order));

    // Rows share H but are otherwise independent.
#pragma omp parallel for schedule(static) if (rows * n * n >= (1u << 16))
    for (std::int64_t ri = 0; ri < static_cast<std::int64_t>(rows); ++ri) {
        const auto r = static_cast<std::size_t>(ri);
        std::vector<double> work(n);
        for (std::size_t k = 0; k < n; ++k)
            work[k] = w(r, order[k]);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t col = order[k];
            const QuantParams& p = q.params_at(r, col);
            const std::uint8_t code = quantize_value(work[k], p, cfg.bits);
            q.codes[r * n + col] = code;
            const double err = (work[k] - dequantize_value(code, p)) / u(k, k);
            if (err == 0.0)
                continue;
            const auto urow = u.row(k);
            for (std::size_t j = k + 1; j < n; ++j)
                work[j] -= err * urow[j];
        }
    }
    return q;
}

QuantizedMatrix hessian_quantize(const Matrix& w, const Matrix& h, const QuantConfig& cfg)
{
    Permutation identity(w.cols());
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    return hessian_quantize(w, h, cfg, identity);
}

namespace reference {

QuantizedMatrix hessian_quantize_direct(const Matrix& w, const Matrix& h, const QuantConfig& cfg,
                                        std::span<const std::size_t> order)
{
    check_inputs(w, h, cfg, order);
    const std::size_t rows = w.rows();
    const std::size_t n = w.cols();

    QuantizedMatrix q;
    q.rows = rows;
    q.cols = n;
    q.bits = cfg.bits;
    q.granularity = cfg.granularity;
    q.params = choose_params(w, cfg);
    q.codes.assign(rows * n, 0);

    const Matrix hinv_full = numkit::spd_inverse(permute_symmetric(h, order));
    for (std::size_t r = 0; r < rows; ++r) {
        Matrix hinv = hinv_full;
        std::vector<double> work(n);
        for (std::size_t k = 0; k < n; ++k)
            work[k] = w(r, order[k]);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t col = order[i];
            const QuantParams& p = q.params_at(r, col);
            const std::uint8_t code = quantize_value(work[i], p, cfg.bits);
            q.codes[r * n + col] = code;
            const double d = hinv(i, i);
            const double residual = work[i] - dequantize_value(code, p);
            for (std::size_t j = i + 1; j < n; ++j)
                work[j] += -residual / d * hinv(j, i);
            // Inverse of the Hessian restricted to the columns after i.
            for (std::size_t a = i + 1; a < n; ++a)
                for (std::size_t b = i + 1; b < n; ++b)
                    hinv(a, b) -= hinv(a, i) * hinv(i, b) / d;
        }
    }
    return q;
}

} // namespace reference

} // namespace moek::quant
