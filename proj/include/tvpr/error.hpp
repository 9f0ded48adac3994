#pragma once

#include <stdexcept>
#include <string>

namespace tvpr {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor or matrix extents do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Input values violate a precondition (NaN logits, negative variance, ...).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Parameters inconsistent with the requested configuration or variant.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A point configuration too degenerate to fit a model through.
class DegeneracyError : public Error {
public:
    explicit DegeneracyError(const std::string& msg) : Error(msg) {}
};

// Attempt to normalize a zero-norm vector.
class NormalizationError : public Error {
public:
    explicit NormalizationError(const std::string& msg) : Error(msg) {}
};

// Malformed or truncated on-disk container.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Filesystem-level failure (missing file, unreadable image, ...).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace tvpr
