#pragma once

#include <stdexcept>
#include <string>

namespace fgpr {

// Base class for all library errors. The CLI maps subclasses onto exit
// codes: invalid parameters / configuration -> 1, data problems -> 2,
// numerical failures -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameterError : public Error {
 public:
  using Error::Error;
};

// Not enough observations to carry out an operation (e.g. pairwise means
// need at least two items).
class InsufficientDataError : public InvalidParameterError {
 public:
  using InvalidParameterError::InvalidParameterError;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed input files: bad CSV cells, wrong row counts, negative
// precipitation and the like.
class DataError : public Error {
 public:
  using Error::Error;
};

// Factorization failures that persist after jitter escalation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fgpr
