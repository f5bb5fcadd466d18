#pragma once

#include <stdexcept>
#include <string>

namespace textgen {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes disagree with an op's contract.
struct DimensionError : Error {
    using Error::Error;
};

// An index (token id, target class, axis) is out of range.
struct IndexError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// An API precondition was violated (e.g. backward from a non-scalar).
struct ContractError : Error {
    using Error::Error;
};

// A scalar argument is outside its legal range (e.g. tau <= 0).
struct ParameterError : Error {
    using Error::Error;
};

// Bad experiment configuration or schedule settings.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed caller-supplied data (empty corpus, unnormalized table, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Degenerate input to a top-level entry point.
struct InputError : Error {
    using Error::Error;
};

// Sequence length outside an operation's accepted range.
struct LengthError : Error {
    using Error::Error;
};

// Training diverged or failed mid-run; message carries the step index.
struct TrainingError : Error {
    using Error::Error;
};

// Filesystem trouble: missing file, unwritable path.
struct IoError : Error {
    using Error::Error;
};

// A persisted artifact failed its integrity or version check.
struct CorruptionError : Error {
    using Error::Error;
};

}  // namespace textgen
