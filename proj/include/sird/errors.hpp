#pragma once

#include <stdexcept>
#include <string>

namespace sird {

// Thrown for malformed or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for unusable input data: schema, calendar, sign violations (exit code 3).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an estimation or simulation step fails numerically (exit code 4).
// Math-level domain violations use std::domain_error and map to the same code.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sird
