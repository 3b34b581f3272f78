#pragma once

#include <stdexcept>
#include <string>

namespace deid {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised by the file readers. `offset()` is the byte position where decoding
/// stopped, or npos when the failure is not tied to a position.
class DecodeError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  DecodeError(const std::string& what, std::size_t offset = npos);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace deid
