#pragma once

#include <stdexcept>
#include <string>

namespace astnn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate walls, receivers outside the room, zero-area polygons.
class InvalidGeometry : public Error {
 public:
  using Error::Error;
};

/// A snapshot does not carry enough paths to form a feature vector.
class InsufficientMeasurements : public Error {
 public:
  using Error::Error;
};

/// Receiver hypothesis coincides with an anchor.
class SingularGeometry : public Error {
 public:
  using Error::Error;
};

/// Grid search found no usable lattice point.
class NoFix : public Error {
 public:
  using Error::Error;
};

class AssociationError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the offending line when known.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Raised by the end-to-end runner; names the stage that failed.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace astnn
