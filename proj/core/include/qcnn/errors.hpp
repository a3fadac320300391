#pragma once

#include <stdexcept>
#include <string>

namespace qcnn {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration supplied by the user (bad qubit counts, inconsistent
// experiment documents, ...). CLI exit code 1.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// API misuse: out-of-range indices, mismatched array lengths. Exit code 1.
class UsageError : public Error {
  public:
    using Error::Error;
};

// Problems reading or interpreting input files. Exit code 2.
class DataError : public Error {
  public:
    using Error::Error;
};

// Feature vectors that cannot be mapped onto the quantum register
// (wrong length, non-unit norm, zero vector). Exit code 2.
class EncodingError : public Error {
  public:
    using Error::Error;
};

// A numeric self-check failed (e.g. gradient cross-validation). Exit code 3.
class NumericError : public Error {
  public:
    using Error::Error;
};

} // namespace qcnn
