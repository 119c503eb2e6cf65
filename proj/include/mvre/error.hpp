#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mvre {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or configuration violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where only finite values are allowed.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class MissingInputError : public Error {
 public:
  using Error::Error;
};

/// A forward cache was used with a network it does not belong to, or after
/// the network's parameters changed.
class StaleCacheError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CSV, schema, artifact files).
class DataError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  RankDeficientError(const std::string& what, std::vector<std::string> columns)
      : Error(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class NotInterpretableError : public Error {
 public:
  using Error::Error;
};

// Tile acquisition failures. A missing tile is a definitive answer from the
// source and is never retried; transient failures are.
class MissingTileError : public Error {
 public:
  using Error::Error;
};

class TransientFetchError : public Error {
 public:
  using Error::Error;
};

class RetryExhaustedError : public Error {
 public:
  using Error::Error;
};

class MalformedImageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvre
