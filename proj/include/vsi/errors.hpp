#pragma once

#include <stdexcept>
#include <string>

namespace vsi {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of a formula (e.g. forward-flooded
/// junction, non-positive velocity).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Not enough independent data to determine the requested parameters.
class DegenerateDataError : public Error {
public:
  using Error::Error;
};

/// Inversion target is not reachable (e.g. no real root).
class OutOfRangeError : public Error {
public:
  using Error::Error;
};

/// Iterative fit did not converge or could not be initialised.
class FitFailedError : public Error {
public:
  using Error::Error;
};

/// Threshold detection found no breakpoint worth keeping.
class NoOnsetError : public Error {
public:
  using Error::Error;
};

/// A numerical invariant was violated inside a kernel.
class InternalError : public Error {
public:
  using Error::Error;
};

/// Invalid or incomplete configuration. `key` names the offending entry.
class ConfigError : public Error {
public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

/// Input dataset does not match the expected schema.
class IngestionError : public Error {
public:
  using Error::Error;
};

} // namespace vsi
