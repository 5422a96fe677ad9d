#pragma once

#include <stdexcept>
#include <string>

namespace mifair {

/// Failure categories. The CLI and C API map these onto exit/status codes.
enum class ErrorKind {
  schema,          ///< column missing or schema inconsistent
  value,           ///< malformed cell or out-of-range code
  empty_data,      ///< no usable rows
  config,          ///< invalid configuration value
  empty_condition, ///< conditioning mask selects nothing
  coverage,        ///< batch lacks a subgroup or condition
  divergence,      ///< training produced a non-finite objective
  io,              ///< filesystem failure
  shape,           ///< dimension mismatch between aligned inputs
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace mifair
