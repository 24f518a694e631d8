#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splat4d {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched tensor or image shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An index or parameter outside its admissible range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// A guidance provider or refiner was asked for a view it cannot supply.
class CoverageError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered in a loss or parameter update.
class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `offset()` is the byte offset where parsing failed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace splat4d
