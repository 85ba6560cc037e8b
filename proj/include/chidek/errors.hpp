#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chidek {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad chiral annotations: overlapping centers, priority ties, blade sets.
class AnnotationError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public Error {
 public:
  DegeneracyError(const std::string& what, std::size_t kernel)
      : Error(what), kernel_(kernel) {}
  std::size_t kernel() const { return kernel_; }

 private:
  std::size_t kernel_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class OracleError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { Io, Format, Version, Shape, Truncated, Checksum };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace chidek
