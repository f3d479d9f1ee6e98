#pragma once

#include <string>

#include "srrn/arch.hpp"
#include "srrn/error.hpp"

namespace srrn {

// Binary checkpoint layout (all integers unsigned 32-bit little-endian):
//   magic "SRRN" | version | arch string (length-prefixed UTF-8) |
//   tensor count | per tensor: length-prefixed name, rank, dims...,
//   raw float32 LE data.
// Save/load round-trips byte-exactly.

constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointFault {
    BadMagic,
    BadVersion,
    Truncated,
    Inconsistent,   // names/dims disagree with the arch string's network
};

struct CheckpointError : DataError {
    CheckpointFault fault;
    CheckpointError(CheckpointFault f, const std::string& msg)
        : DataError(msg), fault(f) {}
};

// Writes to a temporary file and renames, so failures leave no partial file.
void save_checkpoint(const std::string& path, Network& net);

Network load_checkpoint(const std::string& path);

}  // namespace srrn
