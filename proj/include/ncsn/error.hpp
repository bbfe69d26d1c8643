#pragma once

#include <stdexcept>
#include <string>

namespace ncsn {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

class NumericalError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical"; }
};

class ConfigError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class IoError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace ncsn
