#include "moek/numkit/reference.hpp"

#include "moek/error.hpp"

namespace moek::numkit::reference {

Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows())
        throw ShapeError("reference::matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p)
                acc += a(i, p) * b(p, j);
            out(i, j) = acc;
        }
    return out;
}

Matrix gram(const Matrix& x)
{
    Matrix out(x.rows(), x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < x.cols(); ++p)
                acc += x(i, p) * x(j, p);
            out(i, j) = acc;
        }
    return out;
}

} // namespace moek::numkit::reference
