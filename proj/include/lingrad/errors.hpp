#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lingrad {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or settings that can never work (dimension mismatch, bad flag value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared while evaluating layer `layer`.
class NumericError : public Error {
 public:
  NumericError(std::size_t layer, const std::string& what)
      : Error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

// Every counted layer had a zero tangent, so the nonlinear measurement is undefined.
class DegenerateDirection : public Error {
 public:
  using Error::Error;
};

// The measured nonlinearity is exactly zero; the stepsize must be enlarged before
// a linear range can be inferred.
class MeasureTooSmall : public Error {
 public:
  using Error::Error;
};

// Stepsize escalation after MeasureTooSmall ran out of retries.
class EscalationExhausted : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace lingrad
