#pragma once

#include <stdexcept>
#include <string>

namespace vllens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary blob: bad magic, version, dtype or dims.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A record failed one of the dump invariants. `check` names the failed rule.
class ValidationError : public Error {
 public:
  ValidationError(std::string example, std::string check, const std::string& detail)
      : Error("example '" + example + "': " + check + ": " + detail),
        example_(std::move(example)),
        check_(std::move(check)) {}

  const std::string& example() const { return example_; }
  const std::string& check() const { return check_; }

 private:
  std::string example_;
  std::string check_;
};

/// Raised by write_dump when a record does not satisfy its type invariants.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  IndexOutOfRange(std::string field, const std::string& detail)
      : Error(field + ": " + detail), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class UnknownMetric : public Error {
 public:
  using Error::Error;
};

class DuplicateName : public Error {
 public:
  using Error::Error;
};

/// Thrown by metric implementations for a single (layer, head) cell.
class MetricError : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class TooFewPoints : public Error {
 public:
  using Error::Error;
};

class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

class EmptyPool : public Error {
 public:
  using Error::Error;
};

class FilteredQuery : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

}  // namespace vllens
