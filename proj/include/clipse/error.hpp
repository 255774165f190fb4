#pragma once

#include <stdexcept>
#include <string>

namespace clipse {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Image bytes could not be decoded. Callers skip and report, they do not abort.
class DecodeError : public Error {
 public:
  using Error::Error;
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

class ZeroVectorError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class DirectoryNotFound : public Error {
 public:
  using Error::Error;
};

class EmptyIndexError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed persisted index or manifest.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A SearchIndex invariant (sorted unique paths, dimension) was violated.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class InvalidShardCount : public Error {
 public:
  using Error::Error;
};

class DuplicatePathError : public Error {
 public:
  using Error::Error;
};

class AllShardsFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace clipse
