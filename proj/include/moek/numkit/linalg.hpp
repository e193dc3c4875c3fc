#pragma once

#include "moek/numkit/matrix.hpp"

namespace moek::numkit {

// Parallel kernels. Every output entry is accumulated in a fixed sequential
// order, so results are bit-identical for any thread count.

/// a * b. Throws ShapeError when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);

/// x * x^T (rows x rows).
Matrix gram(const Matrix& x);

/// Cholesky factor L with L * L^T == h.
///
/// Requires h square and symmetric to within 1e-9 (relative to its largest
/// entry). Throws NotPositiveDefinite carrying the index of the first
/// non-positive pivot, so callers can add damping and retry.
LowerTriangular cholesky(const Matrix& h);

/// Solves L * y = b for each column of b.
Matrix solve_lower(const LowerTriangular& l, const Matrix& b);

/// Solves L^T * x = b for each column of b.
Matrix solve_upper_transposed(const LowerTriangular& l, const Matrix& b);

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
/// The result is exactly symmetric.
Matrix spd_inverse(const Matrix& h);

/// Same as spd_inverse when the factor is already available.
Matrix spd_inverse(const LowerTriangular& l);

} // namespace moek::numkit
