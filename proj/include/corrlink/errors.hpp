#pragma once

#include <stdexcept>
#include <string>

namespace corrlink {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (e.g. Q_inv(1.5)).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid or infeasible configuration: bad model parameters, too few bits,
/// violated scheme preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A matrix that should be invertible is numerically singular.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Alice scanned more samples than the wait cap allows.
class WaitCapExceeded : public Error {
 public:
  WaitCapExceeded(const std::string& what, double cap) : Error(what), cap_(cap) {}
  double cap() const noexcept { return cap_; }

 private:
  double cap_;
};

/// A caller broke a function contract (e.g. quantizing a value below threshold).
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Sweep aborted because too many trials failed.
class FailureRateExceeded : public Error {
 public:
  using Error::Error;
};

}  // namespace corrlink
