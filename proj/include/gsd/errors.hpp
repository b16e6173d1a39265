#pragma once

#include <stdexcept>
#include <string>

namespace gsd {

// Base class for all library errors. CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible dimensions between operands.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Input violates a documented precondition (empty batch, bad label, ...).
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Bad or inconsistent run configuration.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// File system failure; message carries the offending path.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finite ones are required (NaN loss, ...).
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

}  // namespace gsd
