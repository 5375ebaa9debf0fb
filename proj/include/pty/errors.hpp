#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pty {

enum class ErrorKind {
  bounds,
  validation,
  config,
  numerical,
  io,
  corruption,
  unsupported_version,
  protocol,
  deadlock,
  alignment,
  aborted,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::bounds: return "bounds error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::numerical: return "numerical failure";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::corruption: return "corruption error";
    case ErrorKind::unsupported_version: return "unsupported version";
    case ErrorKind::protocol: return "protocol error";
    case ErrorKind::deadlock: return "deadlock timeout";
    case ErrorKind::alignment: return "alignment error";
    case ErrorKind::aborted: return "aborted";
  }
  return "error";
}

/// Every failure raised by the library. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same kind, with a context prefix such as "worker 2, LS stage, iteration 5".
  Error with_context(const std::string& context) const { return Error(kind_, context + ": " + detail_); }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace pty
