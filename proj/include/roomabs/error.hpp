#pragma once

#include <stdexcept>
#include <string>

namespace roomabs {

// Base of every error the library throws. Subclasses name the failure kind so
// callers (and tests) can react to a specific condition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InfeasibleGeometry : public Error {
 public:
  using Error::Error;
};

class IterationCapExceeded : public Error {
 public:
  using Error::Error;
};

class SampleRateError : public Error {
 public:
  using Error::Error;
};

class UndefinedCurve : public Error {
 public:
  using Error::Error;
};

class InsufficientDecay : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ZeroSignal : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class Divergence : public Error {
 public:
  using Error::Error;
};

class CorruptFile : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MissingModel : public Error {
 public:
  using Error::Error;
};

}  // namespace roomabs
