#pragma once

#include <stdexcept>
#include <string>

namespace cloudfill {

// Error categories map onto CLI exit codes: Io -> 1, Config/Validation -> 2,
// Numeric -> 3.
enum class ErrorKind { Io, Config, Validation, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorKind::Io, msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& msg)
      : Error(ErrorKind::Validation, msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

}  // namespace cloudfill
