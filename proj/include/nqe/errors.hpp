#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nqe {

// Base of every error raised by the library. The CLI maps subclasses to exit
// codes: FormatError/ParseError/LabelError -> 2, DataError -> 3,
// NumericalError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A line of an input file could not be decoded.
class FormatError : public Error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Query text does not conform to the grammar, or the AST is invalid.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// A label does not name a known entity or relation.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Data does not satisfy a precondition (missing arity, empty dataset, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace nqe
