#pragma once

#include <stdexcept>
#include <string>

namespace pcrsim {

// Base of every error raised by the library. Callers that only want to
// report and exit can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPrecision : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

// A certified enclosure of an irrational value kept straddling a rounding
// midpoint up to the precision cap.
class AmbiguousRounding : public Error {
 public:
  using Error::Error;
};

class ContextOverflow : public Error {
 public:
  using Error::Error;
};

class NonScratchNonAnswerEmission : public Error {
 public:
  using Error::Error;
};

class CodeSearchExhausted : public Error {
 public:
  using Error::Error;
};

class NotPureGdn : public Error {
 public:
  using Error::Error;
};

class NotPureGa : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace pcrsim
