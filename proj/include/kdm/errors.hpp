#pragma once

#include <stdexcept>
#include <string>

namespace kdm {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor/vector dimensions.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration value (bad key, range violation, missing field).
struct ConfigError : Error {
    using Error::Error;
};

// Training diverged; carries the iteration at which it happened.
struct TrainingError : Error {
    long iteration;
    TrainingError(const std::string& msg, long iter)
        : Error(msg + " (iteration " + std::to_string(iter) + ")"), iteration(iter) {}
};

// Non-finite gradient fed to the optimizer; names the offending parameter.
struct OptimError : Error {
    std::string param;
    OptimError(const std::string& msg, std::string param_name)
        : Error(msg + ": " + param_name), param(std::move(param_name)) {}
};

// Numerical failure (ill-conditioned solve, non-finite ODE state, ...).
struct NumericError : Error {
    using Error::Error;
};

// Operation not defined for the given representation.
struct UnsupportedError : Error {
    using Error::Error;
};

// File/container errors. Distinct subtypes so callers can react per variant.
struct IoError : Error {
    using Error::Error;
};
struct BadMagicError : IoError {
    using IoError::IoError;
};
struct VersionError : IoError {
    using IoError::IoError;
};
struct TruncatedError : IoError {
    using IoError::IoError;
};
struct NonFiniteError : IoError {
    using IoError::IoError;
};
struct MissingInputError : IoError {
    std::string path;
    explicit MissingInputError(std::string p)
        : IoError("missing input: " + p), path(std::move(p)) {}
};

}  // namespace kdm
