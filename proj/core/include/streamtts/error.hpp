#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace streamtts {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A function under evaluation produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class InfeasibleLatticeError : public Error {
 public:
  using Error::Error;
};

/// Refusal to enumerate a lattice that is too large.
class SizeGuardError : public Error {
 public:
  SizeGuardError(const std::string& what, double estimated_paths)
      : Error(what), estimated_paths_(estimated_paths) {}
  double estimated_paths() const { return estimated_paths_; }

 private:
  double estimated_paths_;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite training loss. Carries the lattice node (or frame) where the
/// first non-finite value appeared; -1 when not applicable.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long row = -1, long col = -1)
      : Error(what), row_(row), col_(col) {}
  long row() const { return row_; }
  long col() const { return col_; }

 private:
  long row_;
  long col_;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// The instrumented text source was asked for a token that has not arrived.
class StreamingViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace streamtts
