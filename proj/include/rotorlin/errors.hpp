#pragma once

#include <stdexcept>
#include <string>

namespace rotorlin {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A documented precondition on a value was violated (e.g. a bivector that is
// not simple enough for the closed-form exponential).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

// Tied or nearly tied spectral values make the invariant decomposition
// non-unique; the residual after extraction failed the simplicity test.
class DegeneracyError : public Error {
 public:
  DegeneracyError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class StaleWarmStart : public Error {
 public:
  StaleWarmStart(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class MissingGradient : public Error {
 public:
  MissingGradient(const std::string& what, std::size_t parameter)
      : Error(what), parameter_(parameter) {}
  std::size_t parameter() const { return parameter_; }

 private:
  std::size_t parameter_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace rotorlin
