#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctxrw {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class UnseenWord : public Error {
 public:
  using Error::Error;
};

class RareWord : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxrw
