#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace revt {

inline constexpr const char* kToolVersion = "0.1.0";

// Shape or geometry mismatch between tensors / images.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller violated an API precondition (non-scalar loss, even kernel, ...).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or truncated serialized data.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid network or experiment configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values produced by a forward op.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Divergence or bad gradients during a training run.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structural mismatch between checkpoints entering a merge.
struct MergeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace revt
