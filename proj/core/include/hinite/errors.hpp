#pragma once

#include <stdexcept>
#include <string>

namespace hinite {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor/matrix shapes. The message names both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Node/view index outside the graph.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Bad user input: malformed config file, unknown variant name, bad flag.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data; carries a 1-based line number when known.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, long line)
      : ConfigError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : ConfigError(what), line_(0) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Filesystem trouble: missing file, unwritable directory, short read.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (diverged training, bad gradient).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hinite
