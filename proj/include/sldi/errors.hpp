#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sldi {

/// Base of every library error. The concrete type is the public error identifier.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GridError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidState : public Error {
 public:
  using Error::Error;
};

class UnsupportedScheme : public Error {
 public:
  using Error::Error;
};

class NumericsError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite state produced while stepping an SDE.
class NumericalBlowup : public Error {
 public:
  explicit NumericalBlowup(std::size_t step, const std::string& what = "non-finite state")
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Malformed input file; line numbers are 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace sldi
