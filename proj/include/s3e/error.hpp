#pragma once

#include <stdexcept>
#include <string>

namespace s3e {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input (vector files, frequency files, STS tables).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Malformed or incompatible binary model file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A value violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Pearson correlation requested on a constant series.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

}  // namespace s3e
