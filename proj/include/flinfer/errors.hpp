#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flinfer {

// Shape/width mismatch between tensors or parameter layouts.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad argument value (label out of range, alpha <= 0, ...).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A sampling pool cannot satisfy the requested draw.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk data (IDX files, checkpoints).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Config parsing error; carries the key path that failed.
struct ConfigError : std::runtime_error {
    std::string key_path;
    ConfigError(std::string path, const std::string& what)
        : std::runtime_error(path.empty() ? what : path + ": " + what),
          key_path(std::move(path)) {}
};

// Size search did not terminate; carries the best candidate seen.
struct SearchError : std::runtime_error {
    std::size_t best_size;
    double best_norm;
    SearchError(const std::string& what, std::size_t best, double norm)
        : std::runtime_error(what), best_size(best), best_norm(norm) {}
};

}  // namespace flinfer
