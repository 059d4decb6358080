#pragma once

#include <stdexcept>
#include <string>

namespace mdlrs {

// Failure categories. The C API maps each onto a status code (see mdlrs.h).
enum class ErrorKind {
  Usage,
  Config,
  Io,
  Format,
  Training,
  State,
  UndefinedValue,
  Dimension,
  Argument,
  Validation,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool ok, ErrorKind kind, const std::string& message) {
  if (!ok) fail(kind, message);
}

}  // namespace mdlrs
