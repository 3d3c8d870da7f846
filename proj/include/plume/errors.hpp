#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plume {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad problem size (n < 2 for generation, n > 10 for the exhaustive oracle).
class SizeError : public Error {
 public:
  using Error::Error;
};

// Shapes or lengths that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Values outside an operation's domain (tau <= 0, non-finite entries, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Misuse of an API contract (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

class InvalidMoveError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class CorruptFileError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace plume
