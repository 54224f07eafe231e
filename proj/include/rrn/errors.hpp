#pragma once

#include <stdexcept>
#include <string>

namespace rrn {

enum class ErrorKind {
  BadMagic,
  BadHeader,
  Truncated,
  SizeMismatch,
  InputNotFound,
  InvalidArgument,
  NumericFailure,
  IoError,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace rrn
