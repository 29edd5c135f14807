#pragma once

#include <stdexcept>
#include <string>

namespace abhe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or extents that violate an operator precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Near-singular linear system, non-invertible homography.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the differentiation tape (non-scalar loss, double backward).
class TapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during training or evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Metric requested on a pair whose warped overlap is (nearly) empty.
class NoOverlapError : public Error {
 public:
  using Error::Error;
};

/// Correlation volume larger than the configured memory cap.
class MemoryGuardError : public Error {
 public:
  using Error::Error;
};

}  // namespace abhe
