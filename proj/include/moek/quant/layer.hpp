#pragma once

#include "moek/quant/hessian.hpp"
#include "moek/quant/smoothing.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>

namespace moek::quant {

struct LayerOptions
{
    JointQuantConfig quant{};
    std::size_t grid_steps = kDefaultGridSteps;
    Ordering ordering = Ordering::none;
    double damping = kDefaultDamping;
};

/// Fewer calibration tokens than this draws a warning from quantize_layer.
inline constexpr std::size_t kRecommendedCalibrationTokens = 8;

struct LayerQuantResult
{
    QuantizedMatrix weights;           // smoothed weights, compensated
    std::vector<QuantParams> act_params; // smoothed activations
    SmoothingResult smoothing;
    Ordering ordering = Ordering::none;
    std::optional<Permutation> order; // empty for Ordering::none
    double output_mse = 0.0;
    double rtn_baseline_mse = 0.0;
};

/// Smoothing search, Hessian from the smoothed activations, optional channel
/// ordering, then compensated weight quantization.
///
/// output_mse is ||deq(W_q) Q(X_s) - W X||_F^2 / (rows * tokens); the RTN
/// baseline quantizes the unsmoothed W and X the same way without any
/// compensation.
LayerQuantResult quantize_layer(const Matrix& w, const Matrix& x_calib, const LayerOptions& opts = {});

/// Output-space MSE of already-quantized operands against W X.
double output_mse(const Matrix& wq, const Matrix& xq, const Matrix& reference);

/// Document with keys exponent, factors, bits, mse, rtn_mse, ordering plus
/// the parameters needed to dequantize the codes.
nlohmann::json to_json(const LayerQuantResult& r);

} // namespace moek::quant
