// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace swarm {

enum class ErrorKind {
  parse,
  render,
  validation,
  shape,
  non_finite,
  format,
  io,
  state,
  argument,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::render: return "render";
    case ErrorKind::validation: return "validation";
    case ErrorKind::shape: return "shape";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::state: return "state";
    case ErrorKind::argument: return "argument";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so the CLI can report
/// it as machine-readable JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace swarm
