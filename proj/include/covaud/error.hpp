#pragma once

#include <stdexcept>
#include <string>

namespace covaud {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that cannot be read or does not follow its declared format.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration; raised before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace covaud
