#pragma once

/// @file errors.hpp
/// @brief Structured error types shared by all solver modules.

#include <stdexcept>
#include <string>

namespace mfgpi {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A point or vector had the wrong dimension; names the offending axis.
class DimensionError : public Error {
public:
    DimensionError(const std::string& what, int axis) : Error(what), axis(axis) {}
    int axis;
};

/// A differential operator is invalid for the kernel it was applied to
/// (e.g. a time derivative on a purely spatial kernel).
class InvalidOperatorError : public Error {
public:
    using Error::Error;
};

/// A linear system was singular beyond nugget repair; carries a condition
/// estimate (ratio of extreme eigenvalues of the offending matrix).
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& what, double condition_estimate)
        : Error(what), condition_estimate(condition_estimate) {}
    double condition_estimate;
};

/// Equality constraints were not triangular in their designated variables.
class NonTriangularConstraintError : public Error {
public:
    using Error::Error;
};

/// Configuration file / preset problems.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace mfgpi
