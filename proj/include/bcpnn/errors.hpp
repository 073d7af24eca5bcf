#ifndef BCPNN_ERRORS_HPP
#define BCPNN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bcpnn {

// Root of every failure raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class ParameterError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

// data ingestion / persistence
class FormatError : public Error { public: using Error::Error; };
class LengthError : public Error { public: using Error::Error; };
class ConsistencyError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class VersionError : public FormatError { public: using FormatError::FormatError; };

// numerics
class NumericError : public Error { public: using Error::Error; };
class DivergenceError : public NumericError { public: using NumericError::NumericError; };

} // namespace bcpnn

#endif
