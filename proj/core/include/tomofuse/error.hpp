#pragma once

#include <stdexcept>
#include <string>

namespace tomofuse {

// Every error carries a category prefix in what() ("config: ...", "format: ...")
// so the CLI can surface a distinct message per failure class.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg) : Error("invalid argument: " + msg) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& msg) : Error("dimension mismatch: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error("format: " + msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& msg) : Error("resource: " + msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace tomofuse
