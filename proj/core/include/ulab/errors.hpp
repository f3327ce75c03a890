#pragma once

#include <stdexcept>
#include <string>

namespace ulab {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, short read, failed write.
class IoError : public Error {
 public:
  using Error::Error;
};

// Bad magic, wrong version, corrupt serialized state.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structures that should agree don't (e.g. image/label count mismatch).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Caller passed something out of contract.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Unknown sample id.
class LookupError : public Error {
 public:
  using Error::Error;
};

// A bounded sampling loop ran out of attempts.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Unlearning request for an id that was already removed.
class DoubleUnlearnError : public Error {
 public:
  using Error::Error;
};

// Scoring method cannot run in the current configuration (e.g. S = 1).
class MethodUnavailableError : public Error {
 public:
  using Error::Error;
};

}  // namespace ulab
