#pragma once

#include "moek/numkit/matrix.hpp"

// Single-threaded reference versions of the parallel kernels. Used by the
// tests as cross-checks and by the benchmark as the baseline.
namespace moek::numkit::reference {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix gram(const Matrix& x);

} // namespace moek::numkit::reference
