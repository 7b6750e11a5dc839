#pragma once

#include <stdexcept>
#include <string>

namespace casecast {

// Error taxonomy. Each class maps to one documented CLI exit code
// (see tools/casecast_main.cpp): config/parameter -> 2, data format -> 3,
// consistency/shape -> 4, I/O -> 5.

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParameterError : std::runtime_error {
  explicit ParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (CSV schema, bad rows). Carries a line number when known.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg, long line = -1)
      : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_number(line) {}
  long line_number;
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatch between two artifacts that must agree (tape vs net, checkpoint vs panel).
struct ConsistencyError : std::runtime_error {
  explicit ConsistencyError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values reached the optimizer; carries the offending tensor name.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& tensor, const std::string& msg)
      : std::runtime_error(msg), tensor_name(tensor) {}
  std::string tensor_name;
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace casecast
