#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gelsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value outside its permitted range (press depth, marker position, ...).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration such as an even smoothing kernel.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Calibration could not produce a usable model from the given records.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// A linear solve failed or did not reach its residual target.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. Carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Well-formed file with unusable content (e.g. a mesh without triangles).
class ContentError : public Error {
 public:
  using Error::Error;
};

/// Bundle payload does not match the checksum recorded in its manifest.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gelsim
