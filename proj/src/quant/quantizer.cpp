#include "moek/quant/quantizer.hpp"

#include "moek/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace moek::quant {

namespace {

constexpr double kMinScale = 1e-12;

std::size_t group_of(std::size_t r, std::size_t c, Granularity g) noexcept
{
    switch (g) {
    case Granularity::per_row:
        return r;
    case Granularity::per_column:
        return c;
    case Granularity::per_tensor:
        break;
    }
    return 0;
}

} // namespace

std::string_view to_string(Granularity g)
{
    switch (g) {
    case Granularity::per_tensor:
        return "per_tensor";
    case Granularity::per_row:
        return "per_row";
    case Granularity::per_column:
        return "per_column";
    }
    return "?";
}

Granularity parse_granularity(std::string_view s)
{
    if (s == "per_tensor" || s == "tensor")
        return Granularity::per_tensor;
    if (s == "per_row" || s == "row" || s == "per_output_row")
        return Granularity::per_row;
    if (s == "per_column" || s == "column" || s == "per_token" || s == "token")
        return Granularity::per_column;
    throw ConfigError("unknown granularity '" + std::string(s) + "'");
}

void QuantConfig::validate() const
{
    if (bits < 2 || bits > 8)
        throw ConfigError("bits must be in [2, 8], got " + std::to_string(bits));
}

const QuantParams& QuantizedMatrix::params_at(std::size_t r, std::size_t c) const noexcept
{
    return params[group_of(r, c, granularity)];
}

void QuantizedMatrix::validate() const
{
    QuantConfig{bits, false, granularity}.validate();
    if (codes.size() != rows * cols)
        throw DomainError("quantized matrix code count does not match its shape");
    if (params.size() != group_count(rows, cols, granularity))
        throw DomainError("quantized matrix has " + std::to_string(params.size()) + " parameter groups, expected " +
                          std::to_string(group_count(rows, cols, granularity)));
    const auto top = (1 << bits) - 1;
    for (auto c : codes)
        if (c > top)
            throw DomainError("code " + std::to_string(c) + " outside " + std::to_string(bits) + "-bit range");
    for (const auto& p : params) {
        if (!(p.scale > 0.0) || !std::isfinite(p.scale))
            throw DomainError("quantization scale must be positive and finite");
        if (p.zero_point < 0 || p.zero_point > top)
            throw DomainError("zero point " + std::to_string(p.zero_point) + " outside code range");
    }
}

std::size_t group_count(std::size_t rows, std::size_t cols, Granularity g)
{
    switch (g) {
    case Granularity::per_row:
        return rows;
    case Granularity::per_column:
        return cols;
    case Granularity::per_tensor:
        break;
    }
    return 1;
}

QuantParams choose_params(std::span<const double> values, const QuantConfig& cfg)
{
    cfg.validate();
    const double qmax = cfg.max_code();
    if (cfg.symmetric) {
        double peak = 0.0;
        for (double v : values)
            peak = std::max(peak, std::abs(v));
        const std::int32_t half = std::int32_t{1} << (cfg.bits - 1);
        return {std::max(peak / (half - 1), kMinScale), half};
    }
    // The range always contains zero so that zero_point lands inside the code range.
    double lo = 0.0;
    double hi = 0.0;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = std::max((hi - lo) / qmax, kMinScale);
    const double zp = std::clamp(std::round(-lo / scale), 0.0, qmax);
    return {scale, static_cast<std::int32_t>(zp)};
}

std::vector<QuantParams> choose_params(const Matrix& x, const QuantConfig& cfg)
{
    cfg.validate();
    std::vector<QuantParams> out;
    switch (cfg.granularity) {
    case Granularity::per_tensor:
        out.push_back(choose_params(x.data(), cfg));
        break;
    case Granularity::per_row:
        for (std::size_t r = 0; r < x.rows(); ++r)
            out.push_back(choose_params(x.row(r), cfg));
        break;
    case Granularity::per_column: {
        std::vector<double> column(x.rows());
        for (std::size_t c = 0; c < x.cols(); ++c) {
            for (std::size_t r = 0; r < x.rows(); ++r)
                column[r] = x(r, c);
            out.push_back(choose_params(column, cfg));
        }
        break;
    }
    }
    return out;
}

std::uint8_t quantize_value(double x, const QuantParams& p, int bits) noexcept
{
    const double qmax = static_cast<double>((1 << bits) - 1);
    // std::round rounds halves away from zero.
    const double code = std::round(x / p.scale) + p.zero_point;
    return static_cast<std::uint8_t>(std::clamp(code, 0.0, qmax));
}

QuantizedMatrix rtn_quantize(const Matrix& x, const QuantConfig& cfg)
{
    return quantize_with(x, cfg, choose_params(x, cfg));
}

QuantizedMatrix quantize_with(const Matrix& x, const QuantConfig& cfg, std::vector<QuantParams> params)
{
    cfg.validate();
    QuantizedMatrix q;
    q.rows = x.rows();
    q.cols = x.cols();
    q.bits = cfg.bits;
    q.granularity = cfg.granularity;
    q.params = std::move(params);
    if (q.params.size() != group_count(q.rows, q.cols, q.granularity))
        throw ShapeError("parameter group count does not match granularity");
    q.codes.resize(x.size());
    for (std::size_t r = 0; r < q.rows; ++r)
        for (std::size_t c = 0; c < q.cols; ++c)
            q.codes[r * q.cols + c] = quantize_value(x(r, c), q.params_at(r, c), q.bits);
    return q;
}

Matrix dequantize(const QuantizedMatrix& q)
{
    Matrix out(q.rows, q.cols);
    for (std::size_t r = 0; r < q.rows; ++r)
        for (std::size_t c = 0; c < q.cols; ++c)
            out(r, c) = dequantize_value(q.code(r, c), q.params_at(r, c));
    return out;
}

Matrix fake_quantize(const Matrix& x, const QuantConfig& cfg) { return dequantize(rtn_quantize(x, cfg)); }

} // namespace moek::quant
