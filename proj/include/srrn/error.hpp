#pragma once

#include <stdexcept>
#include <string>

namespace srrn {

// Bad layer wiring, malformed arch strings, dim mismatches.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller misuse: stale caches, mismatched tensors, bad arguments.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or malformed external data (images, manifests, checkpoints).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced non-finite values.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace srrn
