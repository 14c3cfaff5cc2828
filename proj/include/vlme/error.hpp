#pragma once

#include <stdexcept>
#include <string>

namespace vlme {

/// Broad failure class; the CLI maps these onto exit codes.
enum class ErrorKind {
  validation,  // malformed input, precondition violation, bad configuration
  io,          // missing/unreadable/unwritable files, corrupted tensor files
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace vlme
