#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rankope {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments or inconsistent inputs.
class InputError : public Error {
 public:
  using Error::Error;
};

// A dataset is missing something an estimator needs, or is internally corrupt.
class DataError : public Error {
 public:
  using Error::Error;
};

// An exhaustive computation was requested beyond the enumeration caps.
class UnsupportedSizeError : public Error {
 public:
  using Error::Error;
};

// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double grad_norm)
      : Error(what), grad_norm_(grad_norm) {}
  double grad_norm() const { return grad_norm_; }

 private:
  double grad_norm_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace rankope
