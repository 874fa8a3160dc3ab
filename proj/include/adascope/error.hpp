#pragma once

#include <stdexcept>
#include <string>

namespace adascope {

enum class ErrorKind {
  kInput,     // malformed user data (dataset files, edge ids)
  kContract,  // caller violated a precondition (shapes, empty sets)
  kNumeric,   // non-finite values, divergence
  kConfig,    // invalid configuration or degenerate setup
  kIo,        // filesystem failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::kContract, what);
}

/// Process exit code for an error kind: 2 config/input/contract, 3 numeric, 4 I/O.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumeric:
      return 3;
    case ErrorKind::kIo:
      return 4;
    default:
      return 2;
  }
}

}  // namespace adascope
