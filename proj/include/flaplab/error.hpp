#pragma once

#include <stdexcept>
#include <string>

namespace flaplab {

// Invalid configuration values or combinations. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// API called in a state that forbids it (stepping a finished episode,
// backward without forward, ...).
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

// Argument outside the mathematical domain of an operation (bad grid
// level, shape mismatch).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Malformed snapshot or config text.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem failures. CLI exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flaplab
