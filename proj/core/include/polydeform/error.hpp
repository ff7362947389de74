#pragma once

#include <stdexcept>
#include <string>

namespace polydeform {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions that do not conform to an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Geometry too small or collapsed to operate on (short contours, empty
/// masks, polygons whose vertices all coincide).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf encountered where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// backward() on a graph that has already been consumed.
class StaleGraphError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input: config files, uploads, CLI arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint and requested configuration disagree.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace polydeform
