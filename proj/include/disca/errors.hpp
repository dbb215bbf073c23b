#pragma once

#include <stdexcept>
#include <string>

namespace disca {

// Caller broke a documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A primitive produced NaN/Inf. `primitive()` names the offending op.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string primitive, const std::string& what)
      : std::runtime_error(what), primitive_(std::move(primitive)) {}
  const std::string& primitive() const noexcept { return primitive_; }

 private:
  std::string primitive_;
};

class CacheMissError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LineageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace disca
