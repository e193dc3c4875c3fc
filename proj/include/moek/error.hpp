#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace moek {

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Argument / configuration problems. The CLI maps these to the usage exit code.
class ShapeError : public Error
{
public:
    using Error::Error;
};

class DomainError : public Error
{
public:
    using Error::Error;
};

class InputError : public Error
{
public:
    using Error::Error;
};

class ConfigError : public Error
{
public:
    using Error::Error;
};

// File access and file-format problems.
class IoError : public Error
{
public:
    using Error::Error;
};

class ParseError : public IoError
{
public:
    using IoError::IoError;
};

// Numerical failures.
class NumericalError : public Error
{
public:
    using Error::Error;
};

class NotPositiveDefinite : public NumericalError
{
public:
    NotPositiveDefinite(std::size_t pivot, double value)
        : NumericalError("matrix is not positive definite (pivot " + std::to_string(pivot) +
                         " = " + std::to_string(value) + ")"),
          pivot_(pivot),
          value_(value)
    {
    }

    std::size_t pivot() const noexcept { return pivot_; }
    double value() const noexcept { return value_; }

private:
    std::size_t pivot_;
    double value_;
};

class DegenerateHessian : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

class QuantizationFailed : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

} // namespace moek
