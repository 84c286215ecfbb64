#pragma once

#include <stdexcept>
#include <string>

namespace clseg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes. Message names the op and the offending dims.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf encountered in a value or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A configuration value violates its documented range.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed, truncated or version-mismatched file.
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace clseg
