// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef UADPS_ERRORS_HPP
#define UADPS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace uadps {

// Base class so callers can catch everything from this library at once.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller handed us something that violates a documented precondition
// (shape mismatch, non-finite samples, out-of-range parameter, ...).
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& msg) : Error(msg) {}
};

// Weighting would divide by zero: an all-zero target with gamma = 0.
class DegenerateWeights : public Error {
 public:
  explicit DegenerateWeights(const std::string& msg) : Error(msg) {}
};

// A numeric sanity assertion failed (e.g. a Hermitian form came back with
// a large imaginary part). Indicates a bug or badly scaled data, not user
// error.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// A requested capability is not supported by the chosen implementation
// (e.g. asking an external denoiser for an analytic Jacobian-vector
// product).
class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& msg) : Error(msg) {}
};

// The child process behind an external denoiser broke the wire protocol:
// bad magic, wrong dimensions, truncated payload, timeout, or early exit.
class DenoiserProtocolError : public Error {
 public:
  explicit DenoiserProtocolError(const std::string& msg) : Error(msg) {}
};

}  // namespace uadps

#endif  // UADPS_ERRORS_HPP
