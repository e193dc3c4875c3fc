#pragma once

#include "moek/quant/quantizer.hpp"

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace moek::quant {

inline constexpr double kDefaultDamping = 0.01;
inline constexpr int kDampingRetries = 3;

/// H = 2 X X^T + lambda I with lambda = damping_fraction * mean(diag(2 X X^T)).
/// x is channels x tokens. Throws DegenerateHessian for all-zero activations.
Matrix build_hessian(const Matrix& x, double damping_fraction = kDefaultDamping);

enum class Ordering { none, max_abs, sum_squares };

std::string_view to_string(Ordering o);
Ordering parse_ordering(std::string_view s);

using Permutation = std::vector<std::size_t>;

/// Channels sorted by descending statistic, ties by ascending index.
Permutation channel_order(const Matrix& x, Ordering strategy);

bool is_permutation(std::span<const std::size_t> order, std::size_t n);

/// Column-sequential quantization with inverse-Hessian error compensation.
///
/// Columns are visited in `order`. After each column is rounded to its grid,
/// the remaining columns absorb the error along the matching row of the
/// upper Cholesky factor of H^-1, which equals the inverse Hessian of the
/// not-yet-quantized set scaled by its diagonal. Quantization parameters are
/// taken from `w` before the loop and do not change.
///
/// If H cannot be factored, damping of 0.1, 1 and 10 times mean(diag(H)) is
/// tried in turn before giving up with QuantizationFailed.
QuantizedMatrix hessian_quantize(const Matrix& w, const Matrix& h, const QuantConfig& cfg,
                                 std::span<const std::size_t> order);

/// Identity ordering convenience overload.
QuantizedMatrix hessian_quantize(const Matrix& w, const Matrix& h, const QuantConfig& cfg);

namespace reference {

/// Straight transcription of the per-column update: explicit inverse of the
/// remaining block, compensation delta = -(w_i - q_i) / Hinv_ii * Hinv[:, i],
/// then a Schur downdate to drop column i. Serial and O(n^3) per row; kept as
/// an independent cross-check of the factor-based loop.
QuantizedMatrix hessian_quantize_direct(const Matrix& w, const Matrix& h, const QuantConfig& cfg,
                                        std::span<const std::size_t> order);

} // namespace reference

} // namespace moek::quant
