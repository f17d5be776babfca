#pragma once

#include <stdexcept>
#include <string>

namespace sempt {

// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor rank or dimension disagreement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range hyperparameter or argument.
class ParamError : public Error {
 public:
  using Error::Error;
};

// Mathematically unusable input (zero-norm vector, empty sequence, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Violation of an internal API contract (non-scalar loss, mixed tapes, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Missing key in an embedding bank or category registry.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem or transport failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// LLM produced unusable output after retries.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Infeasible synthetic-world specification.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given inputs.
class MetricError : public Error {
 public:
  using Error::Error;
};

// Operation not available on the active backend.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Command-line misuse; maps to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace sempt
