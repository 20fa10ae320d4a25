#pragma once

#include <stdexcept>
#include <string>

namespace tddn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed text input (data file, RUL file, config file).
struct ParseError : Error {
    using Error::Error;
};

/// Well-formed input that violates a structural invariant (cycle gaps, count mismatches).
struct StructuralError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

/// Checkpoint failed magic, version, or checksum validation.
struct IntegrityError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

/// Training produced a NaN or infinite loss.
struct NumericError : Error {
    using Error::Error;
};

} // namespace tddn
