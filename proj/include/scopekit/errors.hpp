#pragma once

#include <stdexcept>
#include <string>

namespace scopekit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sequence length violates a divisibility or minimum-length requirement.
class LengthError : public Error {
public:
    using Error::Error;
};

/// Two operands disagree in shape.
class ShapeError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

/// Input data is empty, non-finite or otherwise unusable.
class DataError : public Error {
public:
    using Error::Error;
};

/// Configuration file or struct fails schema/feasibility checks.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace scopekit
