#pragma once

#include "moek/numkit/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace moek::quant {

using numkit::Matrix;

enum class Granularity {
    per_tensor,
    per_row,    // per output row for weights
    per_column, // per token for channels x tokens activations
};

std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view s);

struct QuantConfig
{
    int bits = 8;
    bool symmetric = false;
    Granularity granularity = Granularity::per_tensor;

    /// Throws ConfigError unless bits is in [2, 8].
    void validate() const;
    std::int32_t max_code() const noexcept { return (std::int32_t{1} << bits) - 1; }
};

/// Affine parameters: real = (code - zero_point) * scale.
struct QuantParams
{
    double scale = 1.0;
    std::int32_t zero_point = 0;

    friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

struct QuantizedMatrix
{
    std::size_t rows = 0;
    std::size_t cols = 0;
    int bits = 8;
    Granularity granularity = Granularity::per_tensor;
    std::vector<std::uint8_t> codes; // row-major
    std::vector<QuantParams> params; // one per group

    std::uint8_t code(std::size_t r, std::size_t c) const noexcept { return codes[r * cols + c]; }
    const QuantParams& params_at(std::size_t r, std::size_t c) const noexcept;

    /// Checks sizes, code range and parameter ranges; throws DomainError.
    void validate() const;

    friend bool operator==(const QuantizedMatrix&, const QuantizedMatrix&) = default;
};

std::size_t group_count(std::size_t rows, std::size_t cols, Granularity g);

/// Min/max affine parameters for one group of values.
QuantParams choose_params(std::span<const double> values, const QuantConfig& cfg);

/// Parameters for every group of x, in group order.
std::vector<QuantParams> choose_params(const Matrix& x, const QuantConfig& cfg);

std::uint8_t quantize_value(double x, const QuantParams& p, int bits) noexcept;

inline double dequantize_value(std::uint8_t code, const QuantParams& p) noexcept
{
    return (static_cast<double>(code) - p.zero_point) * p.scale;
}

/// Round-to-nearest with parameters derived from x itself.
QuantizedMatrix rtn_quantize(const Matrix& x, const QuantConfig& cfg);

/// Round-to-nearest against caller-supplied parameters (one per group).
QuantizedMatrix quantize_with(const Matrix& x, const QuantConfig& cfg, std::vector<QuantParams> params);

Matrix dequantize(const QuantizedMatrix& q);

/// dequantize(rtn_quantize(x, cfg)).
Matrix fake_quantize(const Matrix& x, const QuantConfig& cfg);

} // namespace moek::quant
