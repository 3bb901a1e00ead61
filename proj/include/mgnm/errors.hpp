#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mgnm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidBox : public Error {
 public:
  using Error::Error;
};

/// No person or no pairable object survived filtering: the image yields no predictions.
class EmptyPairSet : public Error {
 public:
  EmptyPairSet() : Error("no human-object pairs") {}
};

class MissingEmbedding : public Error {
 public:
  using Error::Error;
};

class UnknownCategory : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class MissingGradient : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::ptrdiff_t record = -1)
      : Error(record >= 0 ? what + " (record " + std::to_string(record) + ")" : what),
        record_(record) {}

  /// Index of the offending record, or -1 when the failure is not record-specific.
  std::ptrdiff_t record() const noexcept { return record_; }

 private:
  std::ptrdiff_t record_;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

}  // namespace mgnm
