#pragma once

#include <stdexcept>
#include <string>

namespace tempo {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape disagreement (message names both shapes).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// API contract violation (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Operation issued in an invalid state (e.g. second backward without reset).
class StateError : public Error {
public:
    using Error::Error;
};

/// Bad input data (NaN time, unknown event id, unsorted timestamps, ...).
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File parsing failure; message carries the offending line number.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Numerical failure (NaN gradient, diverged loss).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Command-line misuse.
class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace tempo
