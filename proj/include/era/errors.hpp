#pragma once

#include <stdexcept>
#include <string>

namespace era {

// Error taxonomy used across the library. Severity is encoded in the base
// class: invalid_argument for caller mistakes that are checkable up front,
// logic_error for API misuse, runtime_error for conditions that only show up
// while computing or touching the filesystem.

// Shape mismatch between tensors participating in an operation.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A numeric argument is outside its documented range (eps, temperature, ...).
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed caller data: labels out of range, empty dataset, bad CSV row.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A task or model specification is internally inconsistent.
struct SpecError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Unknown or unparsable configuration key/value.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// An API precondition was violated (non-scalar loss, mismatched list sizes).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// An object was used in a state that forbids the operation (consumed tape).
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

// A computation produced or would produce a non-finite value.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A checkpoint does not match the model it is being loaded into.
struct TopologyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem trouble: missing file, unreadable checkpoint, write failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace era
