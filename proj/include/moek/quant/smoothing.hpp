#pragma once

#include "moek/quant/quantizer.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace moek::quant {

/// Quantizer settings for the two operands of W * X.
struct JointQuantConfig
{
    QuantConfig weights{8, false, Granularity::per_row};
    QuantConfig activations{8, false, Granularity::per_tensor};

    static JointQuantConfig with_bits(int bits)
    {
        JointQuantConfig cfg;
        cfg.weights.bits = bits;
        cfg.activations.bits = bits;
        return cfg;
    }
};

inline constexpr std::size_t kDefaultGridSteps = 21;
inline constexpr double kChannelStatFloor = 1e-8;

struct SmoothingResult
{
    double exponent = 0.0;
    std::vector<double> factors; // one per input channel
    double loss = 0.0;
};

/// Per-channel max |x| over tokens (x is channels x tokens), floored at 1e-8.
std::vector<double> channel_max_abs(const Matrix& x);

/// ||Q(W diag(s)) Q(diag(s)^-1 X) - W X||_F.
double quant_loss(const Matrix& w, const Matrix& x, std::span<const double> factors, const JointQuantConfig& cfg);

/// Grid search over exponents {0, 1/(G-1), ..., 1}; factors = stat^e.
/// Ties go to the smaller exponent.
SmoothingResult search_smoothing(const Matrix& w, const Matrix& x, const JointQuantConfig& cfg,
                                 std::size_t grid_steps = kDefaultGridSteps);

/// (W diag(s), diag(s)^-1 X).
std::pair<Matrix, Matrix> apply_smoothing(const Matrix& w, const Matrix& x, std::span<const double> factors);

} // namespace moek::quant
