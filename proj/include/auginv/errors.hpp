#pragma once

#include <stdexcept>
#include <string>

namespace auginv {

// Invalid or incomplete run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing or malformed input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Checkpoint does not match the expected format/architecture (CLI exit code 4).
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values or otherwise degenerate numerics (CLI exit code 5).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// All pairwise activation distances in a batch are zero; Eq-ratio undefined.
class DegenerateBatchError : public NumericError {
public:
    using NumericError::NumericError;
};

// Mean reference distance of an image is zero at some layer.
class DegenerateFeaturesError : public NumericError {
public:
    using NumericError::NumericError;
};

// Caller violated an API precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace auginv
