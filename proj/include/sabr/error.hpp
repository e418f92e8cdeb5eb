#pragma once

#include <stdexcept>
#include <string>

namespace sabr {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape disagreements. Message carries both shapes.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Malformed IDX data files.
struct IdxError : Error {
    enum class Kind { BadMagic, Truncated, CountMismatch };
    Kind kind;
    IdxError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Checkpoint manifest/blob problems.
struct CheckpointError : Error {
    enum class Kind { VersionMismatch, CountMismatch, UnknownLayer, Truncated, BadManifest };
    Kind kind;
    CheckpointError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Thrown when the training loss turns NaN; message carries diagnostics.
struct TrainDivergence : Error {
    explicit TrainDivergence(const std::string& msg) : Error(msg) {}
};

}  // namespace sabr
