#include "moek/quant/smoothing.hpp"

#include "moek/error.hpp"
#include "moek/numkit/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace moek::quant {

namespace {

void check_factors(std::span<const double> factors)
{
    for (double f : factors)
        if (!(f > 0.0) || !std::isfinite(f))
            throw DomainError("smoothing factors must be positive and finite");
}

void check_shapes(const Matrix& w, const Matrix& x, std::size_t nfactors)
{
    if (w.cols() != x.rows())
        throw ShapeError("weights have " + std::to_string(w.cols()) + " input channels, activations have " +
                         std::to_string(x.rows()));
    if (nfactors != x.rows())
        throw ShapeError("expected " + std::to_string(x.rows()) + " smoothing factors, got " +
                         std::to_string(nfactors));
}

double joint_error(const Matrix& ws, const Matrix& xs, const Matrix& reference, const JointQuantConfig& cfg)
{
    const Matrix out = numkit::matmul(fake_quantize(ws, cfg.weights), fake_quantize(xs, cfg.activations));
    return numkit::frobenius_norm(out - reference);
}

} // namespace

std::vector<double> channel_max_abs(const Matrix& x)
{
    std::vector<double> stat(x.rows(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double peak = 0.0;
        for (double v : x.row(r))
            peak = std::max(peak, std::abs(v));
        stat[r] = std::max(peak, kChannelStatFloor);
    }
    return stat;
}

std::pair<Matrix, Matrix> apply_smoothing(const Matrix& w, const Matrix& x, std::span<const double> factors)
{
    check_shapes(w, x, factors.size());
    check_factors(factors);
    Matrix ws = w;
    for (std::size_t r = 0; r < ws.rows(); ++r) {
        auto row = ws.row(r);
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] *= factors[j];
    }
    Matrix xs = x;
    for (std::size_t j = 0; j < xs.rows(); ++j)
        for (double& v : xs.row(j))
            v /= factors[j];
    return {std::move(ws), std::move(xs)};
}

double quant_loss(const Matrix& w, const Matrix& x, std::span<const double> factors, const JointQuantConfig& cfg)
{
    auto [ws, xs] = apply_smoothing(w, x, factors);
    return joint_error(ws, xs, numkit::matmul(w, x), cfg);
}

SmoothingResult search_smoothing(const Matrix& w, const Matrix& x, const JointQuantConfig& cfg,
                                 std::size_t grid_steps)
{
    if (grid_steps < 2)
        throw InputError("grid_steps must be at least 2");
    if (x.cols() == 0)
        throw InputError("empty calibration set");
    check_shapes(w, x, x.rows());
    cfg.weights.validate();
    cfg.activations.validate();

    const std::vector<double> stat = channel_max_abs(x);
    const Matrix reference = numkit::matmul(w, x);
    std::vector<double> losses(grid_steps);

    // Candidates are independent; the argmin below is taken serially in grid order.
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t gi = 0; gi < static_cast<std::int64_t>(grid_steps); ++gi) {
        const double e = static_cast<double>(gi) / static_cast<double>(grid_steps - 1);
        std::vector<double> factors(stat.size());
        for (std::size_t j = 0; j < stat.size(); ++j)
            factors[j] = std::pow(stat[j], e);
        auto [ws, xs] = apply_smoothing(w, x, factors);
        losses[static_cast<std::size_t>(gi)] = joint_error(ws, xs, reference, cfg);
    }

    std::size_t best = 0;
    for (std::size_t g = 1; g < grid_steps; ++g)
        if (losses[g] < losses[best])
            best = g;

    SmoothingResult result;
    result.exponent = static_cast<double>(best) / static_cast<double>(grid_steps - 1);
    result.factors.resize(stat.size());
    for (std::size_t j = 0; j < stat.size(); ++j)
        result.factors[j] = std::pow(stat[j], result.exponent);
    result.loss = losses[best];
    return result;
}

} // namespace moek::quant
