// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rblock {

// Error categories line up with the C API status codes and the CLI exit codes.
enum class ErrorKind {
  Usage = 1,      // bad argument, shape mismatch, missing input file
  Data = 2,       // malformed file or record
  Numerical = 3,  // precondition of an analytic formula, divergence, non-convergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

// Raised when an exact p/gamma formula is asked for outside its validity range.
class GeometryError : public NumericalError {
 public:
  explicit GeometryError(const std::string& what) : NumericalError(what) {}
};

}  // namespace rblock
