#pragma once

#include <stdexcept>
#include <string>

namespace clbench {

// Shape or size disagreement between tensors/kernels.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A continual-learning bookkeeping rule was broken (label outside mask,
// future-task query, duplicate matrix write, ...). Always indicates a bug
// in protocol wiring, never bad user data.
struct ProtocolViolation : std::runtime_error {
  explicit ProtocolViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent configuration. CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid numeric parameter (temperature <= 0, eps <= 0, ...).
struct ParamError : std::runtime_error {
  explicit ParamError(const std::string& msg) : std::runtime_error(msg) {}
};

// Empty or malformed dataset content.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Container file has a bad magic or unsupported version.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Container payload is truncated or inconsistent; carries the byte offset.
struct CorruptionError : std::runtime_error {
  CorruptionError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (at byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

// Operation called in a state where it is not defined (incomplete matrix row, ...).
struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (non-scalar backward root, duplicate parameter name, ...).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failure; message includes the path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace clbench
