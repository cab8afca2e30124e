#pragma once

#include <stdexcept>
#include <string>

namespace fsv {

class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Tensor shape contract violated.
class ShapeError : public Error {
   public:
    using Error::Error;
};

/// NaN or Inf appeared in a forward result. Aborts the current run.
class NumericError : public Error {
   public:
    using Error::Error;
};

/// Tape misuse: backward on a foreign tensor, backward twice, etc.
class TapeError : public Error {
   public:
    using Error::Error;
};

/// Malformed files, missing inputs, I/O failures.
class DataError : public Error {
   public:
    using Error::Error;
};

/// Invalid configuration or command-line usage.
class ConfigError : public Error {
   public:
    using Error::Error;
};

class TooShortError : public DataError {
   public:
    using DataError::DataError;
};

class InsufficientClassesError : public DataError {
   public:
    using DataError::DataError;
};

class InsufficientSamplesError : public DataError {
   public:
    using DataError::DataError;
};

}  // namespace fsv
