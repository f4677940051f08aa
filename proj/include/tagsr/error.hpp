#pragma once

#include <stdexcept>
#include <string>

namespace tagsr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Illegal grammar construction or derivation-tree operation.
class GrammarError : public Error {
public:
    using Error::Error;
};

/// Malformed or incompatible time-series data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Parameter estimation could not produce coefficients.
class EstimationError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace tagsr
