#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chemrel {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or matrix extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared in a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// backward() called twice on the same recorded forward sweep.
class StaleTapeError : public Error {
 public:
  using Error::Error;
};

/// Tokenizer or parser failure, carrying the offending position.
class SmilesError : public Error {
 public:
  enum class Stage { Tokenize, Parse };

  SmilesError(Stage stage, std::size_t position, const std::string& message)
      : Error(message), stage_(stage), position_(position) {}

  Stage stage() const noexcept { return stage_; }
  /// Character offset for tokenizer errors, token index for parser errors.
  std::size_t position() const noexcept { return position_; }

 private:
  Stage stage_;
  std::size_t position_;
};

/// Caller supplied something the operation cannot accept.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// CSV header or config key problems.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint and vocabulary mismatches, malformed checkpoint files.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace chemrel
