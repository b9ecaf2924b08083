#pragma once

#include <stdexcept>
#include <string>

namespace cmr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (files, parameters, topologies).
class InputError : public Error {
 public:
  using Error::Error;
};

/// The l1 solver stopped without meeting its feasibility certificate.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// Fixed-point magnitude exceeded the plaintext budget of the Paillier key.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Cryptographic misuse: key mismatch, out-of-range plaintext, bad key file.
class CryptoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmr
