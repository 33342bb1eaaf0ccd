#pragma once

#include <string>

#include "geoadapt/model.hpp"

namespace geoadapt::persist {

/// Checkpoint problems are distinguishable by type so callers can report
/// version skew differently from corruption.
struct CheckpointVersionError : Error {
    using Error::Error;
};
struct CheckpointShapeError : Error {
    using Error::Error;
};
struct CheckpointTruncatedError : Error {
    using Error::Error;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Layout: 8-byte magic, little-endian u64 header length, JSON header
/// (config, vocabulary, parameter table, metadata), then all parameter
/// values as little-endian float32 in header order. Optimizer state is not
/// persisted; training phases start with a fresh optimizer anyway.
void save_checkpoint(const model::ModelBundle<float>& m, const std::string& path);

model::ModelBundle<float> load_checkpoint(const std::string& path);

}  // namespace geoadapt::persist
