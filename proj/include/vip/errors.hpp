#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vip {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor/vector dimensions.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration value (rejected before any work starts).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input file; carries the byte offset of the failure.
struct FormatError : Error {
    std::size_t byte_offset;
    FormatError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte " + std::to_string(offset) + ")"), byte_offset(offset) {}
};

// Inconsistent dataset or index contents.
struct DataError : Error {
    using Error::Error;
};

// Numeric failure during training; carries the offending parameter name.
struct TrainingError : Error {
    std::string param_name;
    TrainingError(const std::string& msg, std::string param)
        : Error(msg + " [param: " + param + "]"), param_name(std::move(param)) {}
    explicit TrainingError(const std::string& msg) : Error(msg) {}
};

}  // namespace vip
