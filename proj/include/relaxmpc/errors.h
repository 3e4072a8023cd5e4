#pragma once

#include <stdexcept>
#include <string>

namespace relaxmpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by offline design routines (Lyapunov/Riccati, invariant sets).
class DesignError : public Error {
 public:
  using Error::Error;
};

class SpectralRadiusError : public DesignError {
 public:
  using DesignError::DesignError;
};

class NoConvergence : public DesignError {
 public:
  using DesignError::DesignError;
};

class NotContractive : public DesignError {
 public:
  using DesignError::DesignError;
};

class InfeasibleSample : public DesignError {
 public:
  using DesignError::DesignError;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

/// A ConicProgram violates its structural invariants (dimensions, PSD cost).
class IllFormed : public Error {
 public:
  using Error::Error;
};

class UnknownVariable : public Error {
 public:
  using Error::Error;
};

class MissingLyap : public Error {
 public:
  using Error::Error;
};

class MissingTerminalLaw : public Error {
 public:
  using Error::Error;
};

class DegenerateTightening : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class IncompleteTrace : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace relaxmpc
